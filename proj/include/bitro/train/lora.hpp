// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bitro/numerics/params.hpp"

namespace bitro::train {

inline constexpr std::size_t kDefaultLoraRank = 8;
inline constexpr double kDefaultLoraAlpha = 16.0;

/// Target patterns; '*' matches one dotted name segment.
std::vector<std::string> default_lora_targets();

/// Low-rank deltas W_eff = W + (alpha / rank) * up * down for each target.
/// The up/down tensors live in the ParamTree as lora.<target>.up|down.
struct LoraAdapter {
    std::size_t rank = kDefaultLoraRank;
    double alpha = kDefaultLoraAlpha;
    std::vector<std::string> targets;  // concrete parameter names

    double scale() const { return alpha / static_cast<double>(rank); }
    static std::string up_name(const std::string& target) { return "lora." + target + ".up"; }
    static std::string down_name(const std::string& target) { return "lora." + target + ".down"; }
};

/// Changes to the plain model used during fine-tuning.
struct Adaptation {
    std::optional<LoraAdapter> lora;
    /// Gene rows of mil.q_gene that were freshly initialised at re-heading.
    /// Their values live in the trainable tensor mil.q_gene.fresh (one row
    /// each) so they keep training at full rate when the base is frozen.
    std::vector<std::size_t> fresh_rows;

    bool empty() const { return !lora && fresh_rows.empty(); }
};

inline constexpr const char* kFreshRowsName = "mil.q_gene.fresh";

/// Expands patterns against the names in `params`. Throws ConfigError when
/// a pattern matches nothing or names a tensor that is not 2-D.
std::vector<std::string> resolve_targets(const ParamTree& params, const std::vector<std::string>& patterns);

/// Freezes every base tensor and adds lora tensors: up (d x r) zeros,
/// down (r x k) Gaussian with sd 1/sqrt(k).
LoraAdapter attach_lora(ParamTree& params, const std::vector<std::string>& patterns, std::size_t rank,
                        double alpha, std::uint64_t seed);

/// Binds params on a tape with all adaptation terms applied on the fly.
Bound bind_model(const ParamTree& params, ad::Tape& tape, const Adaptation& adapt);

/// Folds every adaptation term into the base tensors and drops the auxiliary
/// entries. All returned tensors are trainable.
ParamTree merge(const ParamTree& params, const Adaptation& adapt);

/// Re-heads mil.q_gene to `target_genes`: rows of genes known to the base are
/// copied; the others are zero in mil.q_gene and initialised in
/// mil.q_gene.fresh. Throws TransferError on an empty intersection.
struct Reheaded {
    ParamTree params;
    std::vector<std::size_t> fresh_rows;
    std::size_t shared = 0;
};
Reheaded rehead(const ParamTree& base, const std::vector<std::string>& base_genes,
                const std::vector<std::string>& target_genes, std::uint64_t seed);

}  // namespace bitro::train
