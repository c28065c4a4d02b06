//
//  optim.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/optim.hpp"
#include "bicilab/error.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "DWT payload is written in host order");

namespace bicilab::nn {

void adam_step(std::span<Tensor> params, std::span<const Eigen::VectorXd> grads, AdamState& state)
{
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: parameter and gradient counts differ");
    if (state.first_moment.empty()) {
        for (const Tensor& p : params) {
            state.first_moment.push_back(Eigen::VectorXd::Zero(p.numel()));
            state.second_moment.push_back(Eigen::VectorXd::Zero(p.numel()));
        }
    }
    if (state.first_moment.size() != params.size())
        throw std::invalid_argument("adam_step: optimizer state tracks a different parameter set");

    ++state.step_count;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Eigen::VectorXd& g = grads[i];
        if (g.size() != params[i].numel())
            throw std::invalid_argument("adam_step: gradient " + std::to_string(i) + " has the wrong size");
        Eigen::VectorXd& m = state.first_moment[i];
        Eigen::VectorXd& v = state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
        const Eigen::ArrayXd m_hat = m.array() / c1;
        const Eigen::ArrayXd v_hat = v.array() / c2;
        params[i].mutable_value().array() -= state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
}

void adam_step(std::span<Tensor> params, AdamState& state)
{
    std::vector<Eigen::VectorXd> grads;
    grads.reserve(params.size());
    for (const Tensor& p : params)
        grads.push_back(p.grad());
    adam_step(params, grads, state);
}

void write_dwt(const std::filesystem::path& path, const std::vector<NamedArray>& arrays)
{
    std::ostringstream manifest;
    manifest << "DWT1\n";
    std::size_t offset = 0;
    for (const auto& a : arrays) {
        if (a.name.empty() || a.name.find_first_of(" \t\n") != std::string::npos)
            throw std::invalid_argument("write_dwt: invalid array name '" + a.name + "'");
        if (a.values.size() != numel(a.shape))
            throw std::invalid_argument("write_dwt: '" + a.name + "' value count does not match its shape");
        std::string dims;
        for (std::size_t i = 0; i < a.shape.size(); ++i)
            dims += (i ? "x" : "") + std::to_string(a.shape[i]);
        manifest << a.name << ' ' << dims << ' ' << offset << ' ' << a.values.size() << '\n';
        offset += static_cast<std::size_t>(a.values.size()) * sizeof(double);
    }
    manifest << "END\n";

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw DataError("cannot write weight file " + path.string());
    const std::string text = manifest.str();
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& a : arrays)
        os.write(reinterpret_cast<const char*>(a.values.data()),
                 static_cast<std::streamsize>(static_cast<std::size_t>(a.values.size()) * sizeof(double)));
}

std::vector<NamedArray> read_dwt(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw DataError("cannot open weight file " + path.string());
    const auto fail = [&](const std::string& why) { return DataError(path.string() + ": " + why); };

    std::string line;
    if (!std::getline(is, line) || line != "DWT1")
        throw fail("missing DWT1 magic");
    std::vector<NamedArray> arrays;
    std::vector<std::size_t> offsets;
    while (std::getline(is, line) && line != "END") {
        std::istringstream ls(line);
        NamedArray a;
        std::string dims;
        std::size_t offset = 0;
        Eigen::Index count = 0;
        if (!(ls >> a.name >> dims >> offset >> count))
            throw fail("malformed manifest line '" + line + "'");
        std::istringstream ds(dims);
        for (std::string d; std::getline(ds, d, 'x');)
            a.shape.push_back(std::stol(d));
        if (numel(a.shape) != count)
            throw fail("shape/count mismatch for '" + a.name + "'");
        a.values.resize(count);
        arrays.push_back(std::move(a));
        offsets.push_back(offset);
    }
    if (line != "END")
        throw fail("manifest not terminated by END");

    const std::streampos payload = is.tellg();
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        is.seekg(payload + static_cast<std::streamoff>(offsets[i]));
        is.read(reinterpret_cast<char*>(arrays[i].values.data()),
                static_cast<std::streamsize>(static_cast<std::size_t>(arrays[i].values.size()) * sizeof(double)));
        if (!is)
            throw fail("payload truncated in '" + arrays[i].name + "'");
    }
    return arrays;
}

} // namespace bicilab::nn
