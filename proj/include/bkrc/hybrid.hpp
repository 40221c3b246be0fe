#pragma once

// Wiring of the knowledge-based model (KBM) into the reservoir: plain reservoir,
// input hybrid (KBM patch appended to the reservoir input), output hybrid (KBM
// patch appended to the readout features) and full hybrid (both).
//
// Layout convention: reservoir block first, KBM block last, in both the input
// and the readout concatenation.

#include "error.hpp"

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bkrc {

enum class hybrid_mode { none, input_hybrid, output_hybrid, full_hybrid };

/// Config name: "reservoir", "ih", "oh", "fh".
inline std::string_view to_string(hybrid_mode m)
{
    switch (m) {
    case hybrid_mode::none: return "reservoir";
    case hybrid_mode::input_hybrid: return "ih";
    case hybrid_mode::output_hybrid: return "oh";
    case hybrid_mode::full_hybrid: return "fh";
    }
    return "reservoir";
}

inline hybrid_mode parse_hybrid_mode(std::string_view name)
{
    if (name == "reservoir") return hybrid_mode::none;
    if (name == "ih") return hybrid_mode::input_hybrid;
    if (name == "oh") return hybrid_mode::output_hybrid;
    if (name == "fh") return hybrid_mode::full_hybrid;
    throw invalid_argument{"unknown hybrid mode '" + std::string{name} + "' (expected reservoir, ih, oh or fh)"};
}

constexpr bool kbm_in_input(hybrid_mode m) noexcept
{
    return m == hybrid_mode::input_hybrid || m == hybrid_mode::full_hybrid;
}

constexpr bool kbm_in_readout(hybrid_mode m) noexcept
{
    return m == hybrid_mode::output_hybrid || m == hybrid_mode::full_hybrid;
}

constexpr bool uses_kbm(hybrid_mode m) noexcept { return m != hybrid_mode::none; }

/// Reservoir part of the readout features.
enum class readout_state { augmented, raw };

/// KBM part of the readout features in OH/FH: the full patch or only the 2 values
/// at the patch center.
enum class kbm_readout { patch, center };

struct hybrid_options {
    readout_state state = readout_state::augmented;
    kbm_readout kbm = kbm_readout::patch;

    friend bool operator==(const hybrid_options&, const hybrid_options&) = default;
};

/// Per-reservoir dimension bookkeeping.
struct dim_plan {
    std::size_t u_dim = 0;        ///< input patch, 2 sigma^2
    std::size_t k_dim = 0;        ///< KBM patch, 2 sigma^2
    std::size_t x_dim = 0;        ///< reservoir input width
    std::size_t h_dim = 0;        ///< readout feature width
    std::size_t y_dim = 2;        ///< (U, V) at the center point
    std::size_t reservoir_block = 0;  ///< leading readout columns fed by the reservoir
    std::size_t kbm_block = 0;        ///< trailing readout columns fed by the KBM

    friend bool operator==(const dim_plan&, const dim_plan&) = default;
};

inline dim_plan plan_dims(hybrid_mode mode, std::size_t r_dim, std::size_t sigma, const hybrid_options& opt = {})
{
    if (sigma < 1 || sigma % 2 == 0) throw invalid_argument{"plan_dims: sigma must be odd and at least 1"};
    if (r_dim < 1) throw invalid_argument{"plan_dims: r_dim must be at least 1"};

    dim_plan p;
    p.u_dim = 2 * sigma * sigma;
    p.k_dim = p.u_dim;
    p.x_dim = kbm_in_input(mode) ? p.u_dim + p.k_dim : p.u_dim;
    p.reservoir_block = opt.state == readout_state::augmented ? 2 * r_dim : r_dim;
    p.kbm_block = kbm_in_readout(mode) ? (opt.kbm == kbm_readout::patch ? p.k_dim : p.y_dim) : 0;
    p.h_dim = p.reservoir_block + p.kbm_block;
    return p;
}

/// none/OH: u_patch; IH/FH: [u_patch; k_patch]. `out` must have the plan's x_dim.
inline void assemble_input_into(hybrid_mode mode, std::span<const double> u_patch, std::span<const double> k_patch,
                                std::span<double> out)
{
    const std::size_t need = kbm_in_input(mode) ? u_patch.size() + k_patch.size() : u_patch.size();
    if (out.size() != need) throw dimension_error{"assemble_input: output width mismatch"};
    std::copy(u_patch.begin(), u_patch.end(), out.begin());
    if (kbm_in_input(mode)) std::copy(k_patch.begin(), k_patch.end(), out.begin() + u_patch.size());
}

inline std::vector<double> assemble_input(hybrid_mode mode, std::span<const double> u_patch,
                                          std::span<const double> k_patch)
{
    if (kbm_in_input(mode) && k_patch.size() != u_patch.size())
        throw dimension_error{"assemble_input: KBM patch has length " + std::to_string(k_patch.size())
                              + ", input patch " + std::to_string(u_patch.size())};
    std::vector<double> out(kbm_in_input(mode) ? u_patch.size() + k_patch.size() : u_patch.size());
    assemble_input_into(mode, u_patch, k_patch, out);
    return out;
}

/// none/IH: r_state; OH/FH: [r_state; k_part]. `out` must have the plan's h_dim.
inline void assemble_features_into(hybrid_mode mode, std::span<const double> r_state, std::span<const double> k_part,
                                   std::span<double> out)
{
    const std::size_t need = kbm_in_readout(mode) ? r_state.size() + k_part.size() : r_state.size();
    if (out.size() != need) throw dimension_error{"assemble_features: output width mismatch"};
    std::copy(r_state.begin(), r_state.end(), out.begin());
    if (kbm_in_readout(mode)) std::copy(k_part.begin(), k_part.end(), out.begin() + r_state.size());
}

inline std::vector<double> assemble_features(hybrid_mode mode, std::span<const double> r_state,
                                             std::span<const double> k_part)
{
    std::vector<double> out(kbm_in_readout(mode) ? r_state.size() + k_part.size() : r_state.size());
    assemble_features_into(mode, r_state, k_part, out);
    return out;
}

}  // namespace bkrc
