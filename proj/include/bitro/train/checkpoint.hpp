// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Container layout (all integers little-endian):
//   "BITRO1"
//   u64 header length, then that many bytes of UTF-8 JSON
//   repeated until EOF:
//     u32 name length, name bytes, u32 rank, rank x u64 extents,
//     product(extents) x f64 values

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "bitro/mil/model.hpp"
#include "bitro/train/lora.hpp"

namespace bitro::train {

inline constexpr char kCheckpointMagic[] = "BITRO1";

/// A model with everything needed to run it on new data.
struct Checkpoint {
    std::string kind = "model";  // "model" or "lora"
    mil::ModelConfig config;
    std::vector<std::string> genes;
    ParamTree params;                      // network tensors with trainable flags
    std::map<std::string, Tensor> extras;  // norm.*, pca.*, cluster.* and similar
    std::optional<LoraAdapter> lora;       // for kind == "lora"
    nlohmann::json meta = nlohmann::json::object();
};

nlohmann::json config_to_json(const mil::ModelConfig& cfg);
mil::ModelConfig config_from_json(const nlohmann::json& j);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Byte image of a checkpoint, as written to disk.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");

}  // namespace bitro::train
