//
//  optim.hpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#pragma once

#include "bicilab/tensor.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bicilab::nn {

struct AdamState {
    std::vector<Eigen::VectorXd> first_moment;
    std::vector<Eigen::VectorXd> second_moment;
    long step_count = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// One bias-corrected Adam update of `params` in place using `grads`.
/// Moments are created on the first call.
void adam_step(std::span<Tensor> params, std::span<const Eigen::VectorXd> grads, AdamState& state);

/// Convenience overload reading each parameter's accumulated gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

struct NamedArray {
    std::string name;
    Shape shape;
    Eigen::VectorXd values;
};

/// DWT v1: a text manifest ("DWT1", one "<name> <shape> <offset> <count>" line
/// per array, "END") followed by little-endian float64 payload. Offsets are
/// byte positions within the payload.
void write_dwt(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_dwt(const std::filesystem::path& path);

} // namespace bicilab::nn
