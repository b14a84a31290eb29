// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace bitro {

/// Base of every error the library throws. `kind()` is a short stable tag
/// ("dimension", "parse", ...) used by the CLI for machine-parsable output.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define BITRO_DEFINE_ERROR(Name, tag)                                        \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what) : Error(tag, what) {}         \
    };

BITRO_DEFINE_ERROR(DimensionError, "dimension")
BITRO_DEFINE_ERROR(ContractError, "contract")
BITRO_DEFINE_ERROR(ParseError, "parse")
BITRO_DEFINE_ERROR(DatasetError, "dataset")
BITRO_DEFINE_ERROR(ConfigError, "config")
BITRO_DEFINE_ERROR(GraphError, "graph")
BITRO_DEFINE_ERROR(BagError, "bag")
BITRO_DEFINE_ERROR(FitError, "fit")
BITRO_DEFINE_ERROR(TrainError, "train")
BITRO_DEFINE_ERROR(TransferError, "transfer")
BITRO_DEFINE_ERROR(MetricError, "metric")
BITRO_DEFINE_ERROR(ProtocolError, "protocol")
BITRO_DEFINE_ERROR(IoError, "io")
BITRO_DEFINE_ERROR(UsageError, "usage")

#undef BITRO_DEFINE_ERROR

}  // namespace bitro
