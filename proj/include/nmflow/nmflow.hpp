// SPDX-License-Identifier: Apache-2.0
#pragma once

// Umbrella header: N:M structured-sparsity training recipes on a small
// reverse-mode autodiff engine, plus the analytic transformer cost model.

#include "nmflow/checkpoint.hpp"
#include "nmflow/common.hpp"
#include "nmflow/cost.hpp"
#include "nmflow/data.hpp"
#include "nmflow/model.hpp"
#include "nmflow/ops.hpp"
#include "nmflow/optimizer.hpp"
#include "nmflow/phases.hpp"
#include "nmflow/random.hpp"
#include "nmflow/sparsity.hpp"
#include "nmflow/tensor.hpp"
#include "nmflow/trainer.hpp"
