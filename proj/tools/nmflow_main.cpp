// SPDX-License-Identifier: Apache-2.0
#include "nmflow/cli.hpp"

int main(int argc, char** argv) { return nmflow::cli::run_cli(argc, argv); }
