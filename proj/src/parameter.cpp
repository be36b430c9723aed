#include "bivad/parameter.hpp"

#include <cmath>
#include <fstream>

namespace bivad {

template <typename T>
Parameter<T>::Parameter(std::string name, Tensor<T> init)
    : name_(std::move(name)),
      var_(std::move(init), true),
      adam_m_(Tensor<T>::zeros(var_.shape())),
      adam_v_(Tensor<T>::zeros(var_.shape())) {}

template <typename T>
ParamPtr<T> ParameterStore<T>::add(const std::string& name, Tensor<T> init) {
    require(!by_name_.contains(name), ErrorCode::invalid_argument,
            "duplicate parameter name " + name);
    auto p = std::make_shared<Parameter<T>>(name, std::move(init));
    ordered_.push_back(p);
    by_name_.emplace(name, p);
    return p;
}

template <typename T>
ParamPtr<T> ParameterStore<T>::uniform(const std::string& name, Shape shape, std::size_t fan_in) {
    const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<T> init(std::move(shape));
    for (auto& v : init.data()) v = static_cast<T>(dist(rng_));
    return add(name, std::move(init));
}

template <typename T>
ParamPtr<T> ParameterStore<T>::constant(const std::string& name, Shape shape, T value) {
    return add(name, Tensor<T>::full(std::move(shape), value));
}

template <typename T>
ParamPtr<T> ParameterStore<T>::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

template <typename T>
std::size_t ParameterStore<T>::total_elements() const {
    std::size_t n = 0;
    for (const auto& p : ordered_) n += p->numel();
    return n;
}

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, const AdamConfig& config) {
    for (auto* p : params)
        if (!p->has_grad())
            fail(ErrorCode::state_error, "parameter " + p->name() + " has no gradient");
    const double b1 = config.beta1, b2 = config.beta2;
    for (auto* p : params) {
        p->advance_step();
        const auto t = static_cast<double>(p->step_count());
        const double c1 = 1.0 - std::pow(b1, t);
        const double c2 = 1.0 - std::pow(b2, t);
        T* w = p->mutable_value().ptr();
        T* m = p->adam_m().ptr();
        T* v = p->adam_v().ptr();
        const T* g = p->grad().ptr();
        for (std::size_t i = 0, n = p->numel(); i < n; ++i) {
            const double gi = g[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = config.lr * (mi / c1) / (std::sqrt(vi / c2) + config.eps);
            w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
        }
        p->clear_grad();
    }
}

namespace {

constexpr char kArchiveMagic[4] = {'B', 'V', 'A', '1'};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) fail(ErrorCode::format_error, "truncated checkpoint");
    return v;
}

} // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<T>& store) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::io_error, "cannot open " + path.string() + " for writing");
    out.write(kArchiveMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(store.size()));
    for (const auto& p : store.all()) {
        put_u32(out, static_cast<std::uint32_t>(p->name().size()));
        out.write(p->name().data(), static_cast<std::streamsize>(p->name().size()));
        write_bvt(out, p->value().template cast<float>());
    }
    if (!out) fail(ErrorCode::io_error, "failed writing checkpoint " + path.string());
}

std::vector<std::pair<std::string, Tensor<float>>> read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io_error, "cannot open checkpoint " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::string_view(magic, 4) != std::string_view(kArchiveMagic, 4))
        fail(ErrorCode::format_error, path.string() + " is not a checkpoint archive");
    const auto count = get_u32(in);
    std::vector<std::pair<std::string, Tensor<float>>> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = get_u32(in);
        if (len > 4096) fail(ErrorCode::format_error, "implausible entry name length");
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (!in) fail(ErrorCode::format_error, "truncated checkpoint entry name");
        entries.emplace_back(std::move(name), read_bvt(in));
    }
    return entries;
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, ParameterStore<T>& store) {
    auto entries = read_archive(path);
    require(entries.size() == store.size(), ErrorCode::format_error,
            "checkpoint has " + std::to_string(entries.size()) + " entries, model expects " +
                std::to_string(store.size()));
    for (auto& [name, tensor] : entries) {
        auto p = store.find(name);
        require(p != nullptr, ErrorCode::format_error, "checkpoint entry " + name + " not in model");
        require(p->shape() == tensor.shape(), ErrorCode::format_error,
                "checkpoint entry " + name + " has shape " + shape_str(tensor.shape()) +
                    ", model expects " + shape_str(p->shape()));
        p->mutable_value() = tensor.template cast<T>();
    }
}

template class Parameter<float>;
template class Parameter<double>;
template class ParameterStore<float>;
template class ParameterStore<double>;
template void adam_step(std::span<Parameter<float>* const>, const AdamConfig&);
template void adam_step(std::span<Parameter<double>* const>, const AdamConfig&);
template void save_checkpoint(const std::filesystem::path&, const ParameterStore<float>&);
template void save_checkpoint(const std::filesystem::path&, const ParameterStore<double>&);
template void load_checkpoint(const std::filesystem::path&, ParameterStore<float>&);
template void load_checkpoint(const std::filesystem::path&, ParameterStore<double>&);

} // namespace bivad
