#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bivad/autograd.hpp"

namespace bivad {

/// A learnable tensor plus its Adam moment buffers.
template <typename T>
class Parameter {
public:
    Parameter(std::string name, Tensor<T> init);

    const std::string& name() const noexcept { return name_; }
    const Var<T>& var() const noexcept { return var_; }
    const Tensor<T>& value() const { return var_.value(); }
    Tensor<T>& mutable_value() { return var_.mutable_value(); }
    const Shape& shape() const { return var_.shape(); }
    std::size_t numel() const { return var_.numel(); }

    bool has_grad() const { return var_.has_grad(); }
    const Tensor<T>& grad() const { return var_.grad(); }
    void set_grad(Tensor<T> g) { var_.set_grad(std::move(g)); }
    void clear_grad() { var_.clear_grad(); }

    Tensor<T>& adam_m() noexcept { return adam_m_; }
    Tensor<T>& adam_v() noexcept { return adam_v_; }
    std::uint64_t step_count() const noexcept { return step_count_; }
    void advance_step() noexcept { ++step_count_; }

private:
    std::string name_;
    Var<T> var_;
    Tensor<T> adam_m_;
    Tensor<T> adam_v_;
    std::uint64_t step_count_ = 0;
};

template <typename T>
using ParamPtr = std::shared_ptr<Parameter<T>>;

/// Owns every parameter of a model, keyed by dotted path, in creation order.
template <typename T>
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

    /// Uniform in +-sqrt(1/fan_in).
    ParamPtr<T> uniform(const std::string& name, Shape shape, std::size_t fan_in);
    ParamPtr<T> constant(const std::string& name, Shape shape, T value);

    const std::vector<ParamPtr<T>>& all() const noexcept { return ordered_; }
    ParamPtr<T> find(const std::string& name) const;
    std::size_t total_elements() const;
    std::size_t size() const noexcept { return ordered_.size(); }

private:
    ParamPtr<T> add(const std::string& name, Tensor<T> init);

    std::mt19937_64 rng_;
    std::vector<ParamPtr<T>> ordered_;
    std::map<std::string, ParamPtr<T>> by_name_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update; clears gradients afterwards. Throws
/// state-error when any parameter has no gradient.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, const AdamConfig& config);

// Checkpoint archive: "BVA1", u32 count, then per entry u32 name length, name
// bytes and a BVT1 tensor.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<T>& store);

/// Every parameter in `store` must appear with a matching shape; otherwise
/// format-error. Extra archive entries are rejected as well.
template <typename T>
void load_checkpoint(const std::filesystem::path& path, ParameterStore<T>& store);

std::vector<std::pair<std::string, Tensor<float>>> read_archive(const std::filesystem::path& path);

extern template class Parameter<float>;
extern template class Parameter<double>;
extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

} // namespace bivad
