// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "nmflow/common.hpp"
#include "nmflow/data.hpp"
#include "nmflow/model.hpp"

namespace nmflow {

// Plain-text key -> tensor store:
//
//   nmflow-ckpt v1
//   <count>
//   <name> <rank> <dim0> ... <dimN-1>
//   <value> <value> ...            (numel values, %.17g, one line)
//
// %.17g round-trips IEEE doubles exactly, so save/load is lossless.

struct CheckpointEntry {
    Shape shape;
    std::vector<double> values;
};

using CheckpointMap = std::map<std::string, CheckpointEntry>;

inline void save_checkpoint(const std::string& path, const CheckpointMap& entries) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "nmflow-ckpt v1\n" << entries.size() << "\n";
    for (const auto& [name, e] : entries) {
        if (name.empty() || name.find_first_of(" \n\t") != std::string::npos)
            throw ConfigError("checkpoint key '" + name + "' must be nonempty without whitespace");
        if (numel(e.shape) != e.values.size())
            throw ShapeError("checkpoint entry '" + name + "': " + std::to_string(e.values.size()) +
                             " values for shape " + shape_str(e.shape));
        out << name << ' ' << e.shape.size();
        for (std::size_t d : e.shape) out << ' ' << d;
        out << '\n';
        for (std::size_t i = 0; i < e.values.size(); ++i)
            out << (i ? " " : "") << detail::fmt_g17(e.values[i]);
        out << '\n';
    }
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline CheckpointMap load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string magic, version;
    in >> magic >> version;
    if (magic != "nmflow-ckpt" || version != "v1")
        throw IoError("'" + path + "' is not an nmflow-ckpt v1 file");
    std::size_t count = 0;
    in >> count;
    CheckpointMap entries;
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        std::size_t rank = 0;
        if (!(in >> name >> rank)) throw IoError("'" + path + "': truncated entry header");
        CheckpointEntry e;
        e.shape.resize(rank);
        for (auto& d : e.shape)
            if (!(in >> d)) throw IoError("'" + path + "': truncated shape for '" + name + "'");
        e.values.resize(numel(e.shape));
        for (auto& v : e.values)
            if (!(in >> v)) throw IoError("'" + path + "': truncated values for '" + name + "'");
        if (!entries.emplace(name, std::move(e)).second)
            throw IoError("'" + path + "': duplicate key '" + name + "'");
    }
    return entries;
}

// ---------------------------------------------------------------------------
// Model and dataset adapters
// ---------------------------------------------------------------------------

inline void save_model(const std::string& path, const Model& model) {
    CheckpointMap m;
    for (const auto& p : model.params()) m[p.name] = {p.tensor.shape(), p.tensor.data()};
    save_checkpoint(path, m);
}

// Loads by name; every model parameter must be present with a matching shape.
inline void load_model(const std::string& path, Model& model) {
    CheckpointMap m = load_checkpoint(path);
    for (auto& p : model.params()) {
        auto it = m.find(p.name);
        if (it == m.end()) throw IoError("checkpoint missing parameter '" + p.name + "'");
        if (it->second.shape != p.tensor.shape())
            throw ShapeError("checkpoint '" + p.name + "' shape " + shape_str(it->second.shape) +
                             " vs model " + shape_str(p.tensor.shape()));
        p.tensor.data() = it->second.values;
    }
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
    CheckpointMap m;
    m["x"] = {{ds.size(), ds.seq_len, ds.token_dim}, ds.x};
    std::vector<double> labels(ds.y.begin(), ds.y.end());
    m["y"] = {{ds.size()}, std::move(labels)};
    save_checkpoint(path, m);
}

inline Dataset load_dataset(const std::string& path) {
    CheckpointMap m = load_checkpoint(path);
    auto xi = m.find("x");
    auto yi = m.find("y");
    if (xi == m.end() || yi == m.end()) throw IoError("dataset file needs 'x' and 'y' entries");
    if (xi->second.shape.size() != 3 || yi->second.shape.size() != 1 ||
        xi->second.shape[0] != yi->second.shape[0])
        throw ShapeError("dataset entries malformed: x " + shape_str(xi->second.shape) + ", y " +
                         shape_str(yi->second.shape));
    Dataset ds;
    ds.seq_len = xi->second.shape[1];
    ds.token_dim = xi->second.shape[2];
    ds.x = std::move(xi->second.values);
    ds.y.reserve(yi->second.values.size());
    for (double v : yi->second.values) ds.y.push_back(static_cast<int>(v));
    return ds;
}

}  // namespace nmflow
