// SPDX-License-Identifier: Apache-2.0
// Text checkpoint format: lossless double round-trips, model and dataset
// adapters, and malformed-file handling.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "nmflow/checkpoint.hpp"
#include "nmflow/data.hpp"
#include "nmflow/model.hpp"

using namespace nmflow;
namespace fs = std::filesystem;

namespace {

fs::path tmpfile(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "nmflow_ckpt_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write_text(const fs::path& p, const std::string& body) {
    std::ofstream out(p);
    out << body;
}

}  // namespace

TEST_CASE("checkpoint: doubles round-trip bit for bit") {
    CheckpointMap m;
    m["extremes"] = {{8},
                     {0.1, 1.0 / 3.0, 1e308, 4.9406564584124654e-324, -0.0, M_PI, -2.5e-17,
                      123456789.123456789}};
    auto path = tmpfile("roundtrip.ckpt").string();
    save_checkpoint(path, m);
    CheckpointMap back = load_checkpoint(path);
    REQUIRE(back.size() == 1);
    const auto& e = back.at("extremes");
    REQUIRE(e.shape == Shape{8});
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(e.values[i] == m["extremes"].values[i]);
        CHECK(std::signbit(e.values[i]) == std::signbit(m["extremes"].values[i]));
    }
}

TEST_CASE("checkpoint: multiple entries with shapes") {
    CheckpointMap m;
    m["a"] = {{2, 3}, {1, 2, 3, 4, 5, 6}};
    m["b"] = {{1}, {42.0}};
    m["scalar_like"] = {{1, 1, 1}, {-7.0}};
    auto path = tmpfile("multi.ckpt").string();
    save_checkpoint(path, m);
    CheckpointMap back = load_checkpoint(path);
    CHECK(back.size() == 3);
    CHECK(back.at("a").shape == Shape{2, 3});
    CHECK(back.at("a").values == m["a"].values);
    CHECK(back.at("scalar_like").values == m["scalar_like"].values);
}

TEST_CASE("checkpoint: invalid entries are rejected at save time") {
    auto path = tmpfile("invalid.ckpt").string();
    CheckpointMap ws;
    ws["has space"] = {{1}, {1.0}};
    CHECK_THROWS_AS(save_checkpoint(path, ws), ConfigError);
    CheckpointMap miscount;
    miscount["a"] = {{2, 2}, {1.0, 2.0}};
    CHECK_THROWS_AS(save_checkpoint(path, miscount), ShapeError);
}

TEST_CASE("checkpoint: malformed files are rejected at load time") {
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/x.ckpt"), IoError);

    auto magic = tmpfile("bad_magic.ckpt");
    write_text(magic, "other-format v9\n0\n");
    CHECK_THROWS_AS(load_checkpoint(magic.string()), IoError);

    auto trunc = tmpfile("truncated.ckpt");
    write_text(trunc, "nmflow-ckpt v1\n1\nw 1 4\n1.0 2.0\n");
    CHECK_THROWS_AS(load_checkpoint(trunc.string()), IoError);

    auto dup = tmpfile("dup.ckpt");
    write_text(dup, "nmflow-ckpt v1\n2\nw 1 1\n1.0\nw 1 1\n2.0\n");
    CHECK_THROWS_AS(load_checkpoint(dup.string()), IoError);
}

TEST_CASE("checkpoint: model weights restore by name") {
    TinyTransformerConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.embed_dim = 8;
    cfg.ff_dim = 16;
    cfg.seq_len = 4;
    cfg.token_dim = 4;
    cfg.num_classes = 3;
    Rng r0(0), r1(99);
    auto src = build_tiny_vit(cfg, r0);
    auto dst = build_tiny_vit(cfg, r1);

    auto path = tmpfile("model.ckpt").string();
    save_model(path, *src);
    load_model(path, *dst);
    for (std::size_t i = 0; i < src->params().size(); ++i)
        CHECK(dst->params()[i].tensor.data() == src->params()[i].tensor.data());

    // Shape mismatch: same names, different dims.
    TinyTransformerConfig wide = cfg;
    wide.ff_dim = 32;
    Rng r2(0);
    auto other = build_tiny_vit(wide, r2);
    CHECK_THROWS_AS(load_model(path, *other), ShapeError);

    // Missing parameters: an MLP checkpoint cannot feed a transformer.
    Rng r3(0);
    auto mlp = build_mlp({4, 4, 3}, r3);
    auto mlp_path = tmpfile("mlp.ckpt").string();
    save_model(mlp_path, *mlp);
    CHECK_THROWS_AS(load_model(mlp_path, *dst), IoError);
}

TEST_CASE("checkpoint: dataset adapter round-trips") {
    SyntheticSpec spec;
    spec.train_size = 6;
    spec.eval_size = 2;
    spec.num_classes = 3;
    spec.seq_len = 2;
    spec.token_dim = 3;
    SyntheticData d = generate(spec);

    auto path = tmpfile("data.ckpt").string();
    save_dataset(path, d.train);
    Dataset back = load_dataset(path);
    CHECK(back.seq_len == d.train.seq_len);
    CHECK(back.token_dim == d.train.token_dim);
    CHECK(back.x == d.train.x);
    CHECK(back.y == d.train.y);

    // A checkpoint without the expected keys is not a dataset.
    CheckpointMap m;
    m["only_x"] = {{1, 2, 3}, {1, 2, 3, 4, 5, 6}};
    auto bad = tmpfile("not_data.ckpt").string();
    save_checkpoint(bad, m);
    CHECK_THROWS_AS(load_dataset(bad), IoError);
}
