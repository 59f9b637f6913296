#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fade::model {

inline constexpr std::uint32_t kAlphabet = 256;

/// Which parts of the predictor are active. Everything except `full` is an
/// ablation used by the bench harness.
enum class Variant : std::uint32_t {
    full = 0,            // dual stream + coarse (gated) + fine refinement
    mlp_only = 1,        // global stream only, no refiner
    cnn_only = 2,        // local stream only, no refiner
    dmd = 3,             // both streams and router, no refiner
    dmd_cci_nogate = 4,  // + coarse channel interaction without the self-gate
    dmd_cci_gate = 5,    // + coarse channel interaction with the self-gate
};

std::string_view to_string(Variant v) noexcept;
std::optional<Variant> parse_variant(std::string_view name) noexcept;
std::vector<Variant> all_variants();

struct ModelConfig {
    std::uint32_t time_steps = 16;
    std::uint32_t embed_dim = 32;
    std::uint32_t cache_dim = 4096;
    std::uint32_t hgr_dim = 128;
    std::uint32_t ffn_dim = 8192;
    std::uint32_t batch = 512;
    std::uint32_t conv_kernel = 3;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 20240611;
    std::uint32_t workers = 8;
    Variant variant = Variant::full;

    std::uint32_t hidden_dim() const noexcept { return time_steps * embed_dim; }

    /// Throws Error(config) naming the first violated invariant.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace fade::model
