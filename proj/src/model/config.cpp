#include "fade/model/config.hpp"

#include <array>
#include <cmath>

#include "fade/error.hpp"

namespace fade::model {

namespace {

struct VariantName {
    Variant variant;
    std::string_view name;
};

constexpr std::array<VariantName, 6> kVariantNames{{
    {Variant::full, "full"},
    {Variant::mlp_only, "mlp_only"},
    {Variant::cnn_only, "cnn_only"},
    {Variant::dmd, "dmd"},
    {Variant::dmd_cci_nogate, "dmd+cci_nogate"},
    {Variant::dmd_cci_gate, "dmd+cci_gate"},
}};

void check(bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::config, "invalid model config: " + what);
}

}  // namespace

std::string_view to_string(Variant v) noexcept {
    for (const auto& entry : kVariantNames)
        if (entry.variant == v) return entry.name;
    return "unknown";
}

std::optional<Variant> parse_variant(std::string_view name) noexcept {
    for (const auto& entry : kVariantNames)
        if (entry.name == name) return entry.variant;
    return std::nullopt;
}

std::vector<Variant> all_variants() {
    std::vector<Variant> out;
    for (const auto& entry : kVariantNames) out.push_back(entry.variant);
    return out;
}

void ModelConfig::validate() const {
    check(time_steps >= 1, "time_steps must be >= 1");
    check(embed_dim >= 1, "embed_dim must be >= 1");
    check(std::uint64_t(time_steps) * embed_dim <= (1u << 20), "time_steps * embed_dim too large");
    check(cache_dim >= embed_dim && cache_dim % embed_dim == 0,
          "cache_dim must be a positive multiple of embed_dim");
    check(hgr_dim >= 1, "hgr_dim must be >= 1");
    check(ffn_dim >= 1, "ffn_dim must be >= 1");
    check(batch >= 1, "batch must be >= 1");
    check(conv_kernel % 2 == 1, "conv_kernel must be odd");
    check(workers >= 1, "workers must be >= 1");
    check(batch % workers == 0, "workers must divide batch");
    check(std::isfinite(lr) && lr > 0, "lr must be positive");
    check(beta1 >= 0 && beta1 < 1, "beta1 must be in [0, 1)");
    check(beta2 >= 0 && beta2 < 1, "beta2 must be in [0, 1)");
    check(std::isfinite(eps) && eps > 0, "eps must be positive");
    check(to_string(variant) != "unknown", "unknown variant");
}

}  // namespace fade::model
