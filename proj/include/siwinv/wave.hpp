#pragma once
// Surrogate forward solver for a post-loaded substrate-integrated waveguide:
// waveguide dispersion, inductive-post shunt reactances, and a palindromic
// ABCD cascade converted to S-parameter magnitudes.
//
// Conventions: lengths in mm, frequencies in GHz, beta in rad/m. All S
// quantities use a normalized reference impedance of 1, which keeps the
// lossless cascade exactly unitary up to rounding.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace siwinv {

inline constexpr double kSpeedOfLight = 2.998e8; // m/s
inline constexpr double kPi = 3.141592653589793238462643383279502884;

struct SubstrateSpec {
    double relative_permittivity = 2.2;
    double width_mm = 15.0;      // W, via-row center to center
    double via_diameter_mm = 0.8; // d
    double via_pitch_mm = 1.3;    // p
};

struct Geometry {
    double d1_mm = 5.5; // first-second post spacing
    double d2_mm = 8.0; // second-third post spacing
    double r1_mm = 0.2;
    double r2_mm = 0.4;
    double r3_mm = 0.8;
    double g = 26.0;    // active-length scaling factor
};

struct FrequencyGrid {
    double f_start_ghz = 9.0;
    double f_stop_ghz = 20.0;
    int n_points = 1001;

    double at(int i) const {
        return f_start_ghz + (f_stop_ghz - f_start_ghz) * static_cast<double>(i) /
                                 static_cast<double>(n_points - 1);
    }
};

struct Spectrum {
    std::vector<double> s11_mag;
    std::vector<double> s21_mag;
    FrequencyGrid grid;
};

struct AbcdMatrix {
    std::complex<double> a{1.0, 0.0};
    std::complex<double> b{0.0, 0.0};
    std::complex<double> c{0.0, 0.0};
    std::complex<double> d{1.0, 0.0};

    AbcdMatrix operator*(const AbcdMatrix& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d,
                c * o.a + d * o.c, c * o.b + d * o.d};
    }
};

// The strict leakage inequality d < p is a design rule reported by
// check_via_rules; the type itself only requires the formulas to stay
// well-defined, so d = p is computable (touching vias, marginal but valid).
inline void validate_substrate(const SubstrateSpec& s) {
    if (s.relative_permittivity < 1.0)
        throw std::runtime_error("invalid-substrate: relative permittivity below 1");
    if (s.width_mm <= 0.0)
        throw std::runtime_error("invalid-substrate: non-positive width");
    if (s.via_diameter_mm <= 0.0 || s.via_diameter_mm > s.via_pitch_mm)
        throw std::runtime_error("invalid-substrate: requires 0 < d <= p");
}

// W_eff = W - d^2 / (0.95 p)
inline double effective_width(const SubstrateSpec& s) {
    validate_substrate(s);
    double weff = s.width_mm - s.via_diameter_mm * s.via_diameter_mm / (0.95 * s.via_pitch_mm);
    if (weff <= 0.0 || weff <= s.via_diameter_mm)
        throw std::runtime_error("invalid-substrate: effective width collapsed");
    return weff;
}

// TE10 cutoff of the equivalent rectangular guide, GHz.
inline double cutoff_frequency(const SubstrateSpec& s) {
    double weff_m = effective_width(s) * 1e-3;
    return kSpeedOfLight / (2.0 * weff_m * std::sqrt(s.relative_permittivity)) / 1e9;
}

struct PropagationResult {
    double beta_rad_per_m;
    double lambda_g_mm;
};

inline PropagationResult propagation(const SubstrateSpec& s, double f_ghz) {
    double fc = cutoff_frequency(s);
    if (f_ghz <= fc) {
        std::ostringstream msg;
        msg << "below-cutoff: f = " << f_ghz << " GHz, cutoff = " << fc << " GHz";
        throw std::runtime_error(msg.str());
    }
    double weff_m = effective_width(s) * 1e-3;
    double k = 2.0 * kPi * f_ghz * 1e9 * std::sqrt(s.relative_permittivity) / kSpeedOfLight;
    double kc = kPi / weff_m;
    double beta = std::sqrt(k * k - kc * kc);
    return {beta, 2.0 * kPi / beta * 1e3};
}

struct ViaRuleReport {
    bool ok = false;
    bool diameter_below_pitch = false;
    bool pitch_below_quarter_lambda = false;
    double diameter_margin_mm = 0.0;       // p - d
    double pitch_margin_mm = 0.0;          // lambda_g/4 - p
    std::string text;
};

// Leakage rules d < p and p < lambda_g/4, the latter evaluated at f_stop
// where the guided wavelength is shortest. Both inequalities are strict.
inline ViaRuleReport check_via_rules(const SubstrateSpec& s, const FrequencyGrid& grid) {
    if (s.via_diameter_mm <= 0.0 || s.width_mm <= 0.0 || s.relative_permittivity < 1.0)
        throw std::runtime_error("invalid-substrate: malformed spec");
    ViaRuleReport r;
    r.diameter_below_pitch = s.via_diameter_mm < s.via_pitch_mm;
    r.diameter_margin_mm = s.via_pitch_mm - s.via_diameter_mm;
    // propagation() validates d < p internally; evaluate lambda_g from a copy
    // that satisfies it so the pitch rule is still reported when d >= p.
    SubstrateSpec probe = s;
    if (!r.diameter_below_pitch) probe.via_diameter_mm = 0.5 * s.via_pitch_mm;
    double lg = propagation(probe, grid.f_stop_ghz).lambda_g_mm;
    r.pitch_below_quarter_lambda = s.via_pitch_mm < lg / 4.0;
    r.pitch_margin_mm = lg / 4.0 - s.via_pitch_mm;
    r.ok = r.diameter_below_pitch && r.pitch_below_quarter_lambda;
    std::ostringstream t;
    t << "d < p: " << (r.diameter_below_pitch ? "pass" : "FAIL")
      << " (margin " << r.diameter_margin_mm << " mm); "
      << "p < lambda_g/4 @ " << grid.f_stop_ghz << " GHz: "
      << (r.pitch_below_quarter_lambda ? "pass" : "FAIL")
      << " (margin " << r.pitch_margin_mm << " mm)";
    r.text = t.str();
    return r;
}

// Normalized shunt reactance of a thin centered inductive post,
// x = (W_eff / lambda_g) * (ln(W_eff / (pi r)) - 1), floored at 0.01.
inline double post_reactance(const SubstrateSpec& s, double radius_mm, double f_ghz) {
    if (radius_mm <= 0.0)
        throw std::runtime_error("geometry-infeasible: non-positive post radius");
    double weff = effective_width(s);
    double lg = propagation(s, f_ghz).lambda_g_mm;
    double x = (weff / lg) * (std::log(weff / (kPi * radius_mm)) - 1.0);
    return std::max(x, 0.01);
}

inline AbcdMatrix abcd_line(double theta_rad) {
    std::complex<double> j(0.0, 1.0);
    return {std::cos(theta_rad), j * std::sin(theta_rad),
            j * std::sin(theta_rad), std::cos(theta_rad)};
}

inline AbcdMatrix abcd_shunt_reactance(double x) {
    std::complex<double> j(0.0, 1.0);
    return {{1.0, 0.0}, {0.0, 0.0}, -j / x, {1.0, 0.0}};
}

struct SParams {
    std::complex<double> s11;
    std::complex<double> s21;
};

inline SParams abcd_to_s(const AbcdMatrix& m) {
    std::complex<double> denom = m.a + m.b + m.c + m.d;
    if (std::abs(denom) < 1e-30)
        throw std::runtime_error("numeric-degeneracy: ABCD sum vanished");
    return {(m.a + m.b - m.c - m.d) / denom, 2.0 / denom};
}

// Length the posts and inter-post spacings occupy along the guide axis;
// this is what the end sections must absorb out of the active length.
inline double geometry_footprint_mm(const Geometry& g) {
    return 2.0 * g.r1_mm + 4.0 * g.r2_mm + 2.0 * g.r3_mm + 2.0 * g.d1_mm + 2.0 * g.d2_mm;
}

// Sampling constraint threshold: G must strictly exceed
// ((R1 + 2 R2 + D1 + D2 + 2 R3) * 2 - 0.4) / 1.3.
// Note the sum weights R3 heavier than the cascade footprint above, so the
// constraint guarantees a strictly positive end section (margin >= R3).
inline double geometry_threshold(const Geometry& g) {
    return ((g.r1_mm + 2.0 * g.r2_mm + g.d1_mm + g.d2_mm + 2.0 * g.r3_mm) * 2.0 - 0.4) / 1.3;
}

inline void validate_geometry(const Geometry& g, double tolerance = 0.0) {
    if (!(g.r1_mm > 0.0) || !(g.d1_mm > 0.0) || !(g.d2_mm > 0.0))
        throw std::runtime_error("geometry-infeasible: non-positive dimension");
    if (!(g.r3_mm + tolerance >= g.r2_mm && g.r2_mm + tolerance >= g.r1_mm))
        throw std::runtime_error("geometry-infeasible: radii ordering violated");
    if (!(geometry_threshold(g) < g.g + tolerance))
        throw std::runtime_error("geometry-infeasible: scaling factor below footprint threshold");
}

// Full cascade:
//   line(L_end) post(R1) line(D1) post(R2) line(D2) post(R3)
//   line(D2) post(R2) line(D1) post(R1) line(L_end)
// where L_end distributes the leftover of the active length G*p + d equally
// to both ends (clamped at 0.1 mm). end_override_mm replaces L_end directly;
// it exists for controlled experiments and skips the G bookkeeping.
inline Spectrum simulate(const SubstrateSpec& spec, const Geometry& g, const FrequencyGrid& grid,
                         std::optional<double> end_override_mm = std::nullopt) {
    validate_substrate(spec);
    if (grid.n_points < 2 || grid.f_start_ghz >= grid.f_stop_ghz)
        throw std::runtime_error("invalid-grid: need ascending grid with at least 2 points");

    double l_end;
    if (end_override_mm) {
        l_end = *end_override_mm;
        if (l_end < 0.0)
            throw std::runtime_error("geometry-infeasible: negative end section override");
    } else {
        double active = g.g * spec.via_pitch_mm + spec.via_diameter_mm;
        double raw = (active - geometry_footprint_mm(g)) / 2.0;
        if (raw < 0.0)
            throw std::runtime_error("geometry-infeasible: active length shorter than post footprint");
        l_end = std::max(raw, 0.1);
    }

    double fc = cutoff_frequency(spec);
    if (grid.f_start_ghz <= fc)
        throw std::runtime_error("below-cutoff: grid start below cutoff");

    Spectrum out;
    out.grid = grid;
    out.s11_mag.resize(grid.n_points);
    out.s21_mag.resize(grid.n_points);

    const double lengths[] = {l_end, g.d1_mm, g.d2_mm, g.d2_mm, g.d1_mm, l_end};
    const double radii[] = {g.r1_mm, g.r2_mm, g.r3_mm, g.r2_mm, g.r1_mm};

    for (int i = 0; i < grid.n_points; ++i) {
        double f = grid.at(i);
        double beta = propagation(spec, f).beta_rad_per_m;
        AbcdMatrix m = abcd_line(beta * lengths[0] * 1e-3);
        for (int k = 0; k < 5; ++k) {
            m = m * abcd_shunt_reactance(post_reactance(spec, radii[k], f));
            m = m * abcd_line(beta * lengths[k + 1] * 1e-3);
        }
        SParams sp = abcd_to_s(m);
        out.s11_mag[i] = std::clamp(std::abs(sp.s11), 0.0, 1.0);
        out.s21_mag[i] = std::clamp(std::abs(sp.s21), 0.0, 1.0);
    }
    return out;
}

// Strict local minima of |S11| below the -10 dB magnitude threshold.
// A flat run counts once, reported at its lowest index. Endpoints excluded.
inline std::vector<double> find_resonances(const Spectrum& s, double threshold = 0.316) {
    std::vector<double> out;
    const auto& v = s.s11_mag;
    const int n = static_cast<int>(v.size());
    int i = 1;
    while (i < n - 1) {
        int j = i;
        while (j + 1 < n && v[j + 1] == v[i]) ++j; // run of equal values i..j
        if (j < n - 1 && v[i - 1] > v[i] && v[j + 1] > v[i] && v[i] < threshold)
            out.push_back(s.grid.at(i));
        i = j + 1;
    }
    return out;
}

} // namespace siwinv
