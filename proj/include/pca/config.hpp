#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pca/csv.hpp"
#include "pca/errors.hpp"

namespace pca {

// ---------------------------------------------------------------------------
// Model parameters

struct ModelParams {
    double lambda = 1.0;   // phase-field diffusivity
    double eta = 1.0;      // nutrient diffusivity
    double D = 1.0;        // PSA diffusivity
    double gamma_h = 1.0;  // nutrient uptake, healthy tissue
    double gamma_c = 2.0;  // nutrient uptake, cancerous tissue
    double gamma_p = 1.0;  // PSA decay rate
    double alpha_h = 0.3;  // PSA production, healthy tissue
    double alpha_c = 0.4;  // PSA production, malignant tissue
    double S_h = 0.5;      // nutrient supply, healthy tissue
    double S_c = 0.6;      // nutrient supply, cancerous tissue
    double M = 0.05;       // tumor mobility
    double m_ref = 1.0;    // reference tilt
    double rho = 1.0 / 3.0;  // proliferation index
    double A = 1.0 / 3.0;    // apoptosis index
    double sigma_l = 0.0;  // nutrient threshold
    double sigma_r = 1.0;  // nutrient reference scale (> 0)

    double gamma_ch() const { return gamma_c - gamma_h; }
    double s_ch() const { return S_c - S_h; }
    double alpha_ch() const { return alpha_c - alpha_h; }
    /// Constant far-time nutrient level S_h / gamma_h.
    double sigma_infinity() const { return S_h / gamma_h; }
    /// Constant far-time PSA level alpha_h / gamma_p.
    double p_infinity() const { return alpha_h / gamma_p; }

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0)) throw ConfigError::non_positive(name);
        };
        positive(lambda, "lambda");
        positive(eta, "eta");
        positive(D, "D");
        positive(gamma_h, "gamma_h");
        positive(gamma_c, "gamma_c");
        positive(gamma_p, "gamma_p");
        positive(alpha_h, "alpha_h");
        positive(alpha_c, "alpha_c");
        positive(S_h, "S_h");
        positive(S_c, "S_c");
        positive(sigma_r, "sigma_r");
        // Mobility may be zero (switches the phase reaction off, useful in
        // sweeps); negative mobility has no meaning here.
        if (M < 0.0) throw ConfigError::non_positive("M");
        if (m_ref < 0.0) throw ConfigError::non_positive("m_ref");
    }
};

// ---------------------------------------------------------------------------
// Therapy schedules: piecewise constant in time, spatially uniform or
// per-cell. Sup norms are exact over this class.

struct ScheduleSegment {
    double t_start = 0.0;
    double value = 0.0;
    std::vector<double> cells;  // empty = spatially uniform

    double max_abs() const {
        if (cells.empty()) return std::abs(value);
        double m = 0.0;
        for (double c : cells) m = std::max(m, std::abs(c));
        return m;
    }
    double min_value() const {
        if (cells.empty()) return value;
        double m = cells[0];
        for (double c : cells) m = std::min(m, c);
        return m;
    }
};

struct ControlProfile {
    std::vector<ScheduleSegment> segments;  // sorted by t_start, first at t = 0

    static ControlProfile constant(double value) {
        ControlProfile p;
        p.segments.push_back({0.0, value, {}});
        return p;
    }

    const ScheduleSegment& at(double t) const {
        std::size_t k = 0;
        while (k + 1 < segments.size() && segments[k + 1].t_start <= t) ++k;
        return segments[k];
    }

    double sup_abs() const {
        double m = 0.0;
        for (const auto& s : segments) m = std::max(m, s.max_abs());
        return m;
    }
    double min_value() const {
        double m = segments.empty() ? 0.0 : segments[0].min_value();
        for (const auto& s : segments) m = std::min(m, s.min_value());
        return m;
    }
};

struct TherapySchedule {
    ControlProfile u;  // cytotoxic drug effect, enters the phase nonlinearity
    ControlProfile s;  // antiangiogenic reduction of nutrient supply
    double u_sup = 0.0;
    double s_sup = 0.0;
    bool s_le_Sc = true;  // s never exceeds the cancerous supply rate

    void finalize(const ModelParams& params) {
        if (u.segments.empty()) u = ControlProfile::constant(0.0);
        if (s.segments.empty()) s = ControlProfile::constant(0.0);
        if (s.min_value() < 0.0)
            throw ConfigError::negative_schedule("s must be nonnegative everywhere");
        u_sup = u.sup_abs();
        s_sup = s.sup_abs();
        s_le_Sc = s_sup <= params.S_c;
    }
};

// ---------------------------------------------------------------------------
// Run settings

enum class IcKind { Constant, Bump, Random };

struct RunConfig {
    int dim = 1;
    int nx = 128;
    int ny = 128;
    double lx = 1.0;
    double ly = 1.0;
    double dt = 0.0;  // 0 = derive from the stability rule
    double t_end = 10.0;
    int output_every = 1;
    IcKind ic = IcKind::Random;
    double ic_phi = 1.0;  // constant value, or amplitude for bump/random
    std::optional<double> ic_sigma;  // default: sigma_tilde (random/bump amplitude)
    std::optional<double> ic_p;      // default: 2 * p_infinity
    std::uint64_t seed = 0;
    double tau_bound = 1e-8;
    double eps_conv = 1e-6;
    bool snapshots = true;

    void validate() const {
        if (dim != 1 && dim != 2) throw ConfigError::bad_value("dim must be 1 or 2");
        if (nx < 3 || (dim == 2 && ny < 3))
            throw ConfigError::bad_value("need at least 3 interior nodes per axis");
        if (!(lx > 0.0) || (dim == 2 && !(ly > 0.0)))
            throw ConfigError::bad_value("extent must be positive");
        if (dt < 0.0) throw ConfigError::bad_value("dt must be positive or auto");
        if (!(t_end >= 0.0)) throw ConfigError::bad_value("t_end must be nonnegative");
        if (dt > 0.0 && t_end > 0.0 && t_end < dt)
            throw ConfigError::bad_value("t_end must be at least dt");
        if (output_every < 1) throw ConfigError::bad_value("output_every must be >= 1");
        if (dt > 0.0 && t_end > 0.0) {
            const double steps_real = t_end / dt;
            const long steps = std::lround(steps_real);
            if (steps < 1 || std::abs(steps_real - static_cast<double>(steps)) > 1e-9 * steps_real)
                throw ConfigError::bad_value("dt must divide t_end");
            if (steps % output_every != 0)
                throw ConfigError::bad_value("output cadence must divide the step count");
        }
        if (!(tau_bound >= 0.0)) throw ConfigError::bad_value("tau_bound must be >= 0");
        if (!(eps_conv > 0.0)) throw ConfigError::bad_value("eps_conv must be > 0");
    }
};

struct SweepSpec {
    std::string axis;  // e.g. "params.M"
    std::vector<double> values;
};

// ---------------------------------------------------------------------------
// Flat key-value document with [params] / [therapy] / [run] / [sweep] sections

struct ConfigDoc {
    // section -> key -> raw value text; insertion order kept for hashing
    std::map<std::string, std::map<std::string, std::string>> sections;

    bool has(const std::string& section, const std::string& key) const {
        auto it = sections.find(section);
        return it != sections.end() && it->second.count(key) > 0;
    }
    const std::string& get(const std::string& section, const std::string& key) const {
        auto it = sections.find(section);
        if (it == sections.end() || !it->second.count(key))
            throw ConfigError::missing_key(section + "." + key);
        return it->second.at(key);
    }
    void set(const std::string& section, const std::string& key, const std::string& value) {
        sections[section][key] = value;
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

inline double number_or(const ConfigDoc& doc, const std::string& section,
                        const std::string& key, double fallback) {
    if (!doc.has(section, key)) return fallback;
    try {
        return parse_double(trim(doc.get(section, key)));
    } catch (const std::exception&) {
        throw ConfigError::bad_value(section + "." + key + " = " + doc.get(section, key));
    }
}

inline double required_number(const ConfigDoc& doc, const std::string& section,
                              const std::string& key) {
    if (!doc.has(section, key)) throw ConfigError::missing_key(section + "." + key);
    return number_or(doc, section, key, 0.0);
}

/// Schedule text: a plain number, or whitespace/comma-separated `t:value`
/// breakpoints ("0:0.2, 5:0").
inline ControlProfile parse_profile(const std::string& text, const std::string& where) {
    ControlProfile profile;
    std::string normalized = text;
    std::replace(normalized.begin(), normalized.end(), ',', ' ');
    std::istringstream ss(normalized);
    std::string token;
    while (ss >> token) {
        const auto colon = token.find(':');
        ScheduleSegment seg;
        try {
            if (colon == std::string::npos) {
                seg.t_start = 0.0;
                seg.value = parse_double(token);
            } else {
                seg.t_start = parse_double(token.substr(0, colon));
                seg.value = parse_double(token.substr(colon + 1));
            }
        } catch (const std::exception&) {
            throw ConfigError::bad_value(where + " segment '" + token + "'");
        }
        profile.segments.push_back(seg);
    }
    if (profile.segments.empty()) return ControlProfile::constant(0.0);
    // stable: duplicated breakpoints keep their listed order
    std::stable_sort(profile.segments.begin(), profile.segments.end(),
                     [](const auto& a, const auto& b) { return a.t_start < b.t_start; });
    if (profile.segments.front().t_start != 0.0)
        throw ConfigError::bad_value(where + " must start at t = 0");
    return profile;
}

}  // namespace detail

/// Keys the loader understands, per section. Anything else in a document
/// or an override is a typo, not a silent no-op.
inline bool is_known_key(const std::string& section, const std::string& key) {
    static const std::map<std::string, std::vector<std::string>> known = {
        {"params",
         {"lambda", "eta", "D", "gamma_h", "gamma_c", "gamma_p", "alpha_h", "alpha_c",
          "S_h", "S_c", "M", "m_ref", "rho", "A", "sigma_l", "sigma_r"}},
        {"therapy", {"u", "s"}},
        {"run",
         {"dim", "nx", "ny", "lx", "ly", "dt", "t_end", "output_every", "ic", "ic_phi",
          "ic_sigma", "ic_p", "seed", "tau_bound", "eps_conv", "snapshots"}},
        {"sweep", {"axis", "values"}},
    };
    const auto it = known.find(section);
    if (it == known.end()) return false;
    return std::find(it->second.begin(), it->second.end(), key) != it->second.end();
}

inline ConfigDoc parse_config_text(const std::string& text) {
    ConfigDoc doc;
    std::istringstream in(text);
    std::string line, section;
    while (std::getline(in, line)) {
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            doc.sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos || section.empty())
            throw ConfigError::bad_value("expected 'key = value' inside a section: " + line);
        const std::string key = detail::trim(std::string_view(line).substr(0, eq));
        if (!is_known_key(section, key))
            throw ConfigError::bad_value("unknown key " + section + "." + key);
        doc.set(section, key, detail::trim(std::string_view(line).substr(eq + 1)));
    }
    return doc;
}

/// Apply `key=value` overrides. Keys may be section-qualified
/// ("params.lambda") or bare when unambiguous across sections.
inline void apply_override(ConfigDoc& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError::bad_value("override must look like key=value: " + assignment);
    std::string key = detail::trim(std::string_view(assignment).substr(0, eq));
    const std::string value = detail::trim(std::string_view(assignment).substr(eq + 1));
    const auto dot = key.find('.');
    if (dot != std::string::npos) {
        const std::string section = key.substr(0, dot);
        const std::string bare = key.substr(dot + 1);
        if (!is_known_key(section, bare))
            throw ConfigError::bad_value("unknown override key " + key);
        doc.set(section, bare, value);
        return;
    }
    std::vector<std::string> hits;
    for (auto& [section, entries] : doc.sections)
        if (entries.count(key)) hits.push_back(section);
    if (hits.empty()) throw ConfigError::bad_value("override key not found: " + key);
    if (hits.size() > 1) throw ConfigError::bad_value("override key ambiguous: " + key);
    doc.set(hits[0], key, value);
}

struct LoadedConfig {
    ModelParams params;
    TherapySchedule schedule;
    RunConfig run;
    std::optional<SweepSpec> sweep;
};

inline LoadedConfig build_config(const ConfigDoc& doc) {
    LoadedConfig cfg;
    auto& p = cfg.params;
    p.lambda = detail::required_number(doc, "params", "lambda");
    p.eta = detail::required_number(doc, "params", "eta");
    p.D = detail::required_number(doc, "params", "D");
    p.gamma_h = detail::required_number(doc, "params", "gamma_h");
    p.gamma_c = detail::required_number(doc, "params", "gamma_c");
    p.gamma_p = detail::required_number(doc, "params", "gamma_p");
    p.alpha_h = detail::required_number(doc, "params", "alpha_h");
    p.alpha_c = detail::required_number(doc, "params", "alpha_c");
    p.S_h = detail::required_number(doc, "params", "S_h");
    p.S_c = detail::required_number(doc, "params", "S_c");
    p.M = detail::required_number(doc, "params", "M");
    p.m_ref = detail::required_number(doc, "params", "m_ref");
    p.rho = detail::required_number(doc, "params", "rho");
    p.A = detail::required_number(doc, "params", "A");
    p.sigma_l = detail::number_or(doc, "params", "sigma_l", 0.0);
    p.sigma_r = detail::number_or(doc, "params", "sigma_r", 1.0);
    p.validate();

    if (doc.has("therapy", "u"))
        cfg.schedule.u = detail::parse_profile(doc.get("therapy", "u"), "therapy.u");
    if (doc.has("therapy", "s"))
        cfg.schedule.s = detail::parse_profile(doc.get("therapy", "s"), "therapy.s");
    cfg.schedule.finalize(p);

    auto& r = cfg.run;
    r.dim = static_cast<int>(detail::number_or(doc, "run", "dim", 1));
    r.nx = static_cast<int>(detail::number_or(doc, "run", "nx", 128));
    r.ny = static_cast<int>(detail::number_or(doc, "run", "ny", r.nx));
    r.lx = detail::number_or(doc, "run", "lx", 1.0);
    r.ly = detail::number_or(doc, "run", "ly", r.lx);
    if (doc.has("run", "dt")) {
        const std::string dt_text = detail::trim(doc.get("run", "dt"));
        r.dt = dt_text == "auto" ? 0.0 : detail::number_or(doc, "run", "dt", 0.0);
    }
    r.t_end = detail::required_number(doc, "run", "t_end");
    r.output_every = static_cast<int>(detail::number_or(doc, "run", "output_every", 1));
    if (doc.has("run", "ic")) {
        const std::string kind = detail::trim(doc.get("run", "ic"));
        if (kind == "constant")
            r.ic = IcKind::Constant;
        else if (kind == "bump")
            r.ic = IcKind::Bump;
        else if (kind == "random")
            r.ic = IcKind::Random;
        else
            throw ConfigError::bad_value("run.ic must be constant|bump|random");
    }
    r.ic_phi = detail::number_or(doc, "run", "ic_phi", 1.0);
    if (doc.has("run", "ic_sigma")) r.ic_sigma = detail::number_or(doc, "run", "ic_sigma", 0.0);
    if (doc.has("run", "ic_p")) r.ic_p = detail::number_or(doc, "run", "ic_p", 0.0);
    r.seed = static_cast<std::uint64_t>(detail::number_or(doc, "run", "seed", 0));
    r.tau_bound = detail::number_or(doc, "run", "tau_bound", 1e-8);
    r.eps_conv = detail::number_or(doc, "run", "eps_conv", 1e-6);
    if (doc.has("run", "snapshots"))
        r.snapshots = detail::trim(doc.get("run", "snapshots")) != "false";
    r.validate();

    if (doc.sections.count("sweep")) {
        SweepSpec sweep;
        sweep.axis = detail::trim(doc.get("sweep", "axis"));
        std::string values = doc.get("sweep", "values");
        std::replace(values.begin(), values.end(), ',', ' ');
        std::istringstream ss(values);
        std::string token;
        while (ss >> token) sweep.values.push_back(parse_double(token));
        if (sweep.values.empty())
            throw ConfigError::bad_value("sweep.values must list at least one value");
        cfg.sweep = sweep;
    }
    return cfg;
}

inline LoadedConfig load_config(const std::string& text,
                                const std::vector<std::string>& overrides = {}) {
    ConfigDoc doc = parse_config_text(text);
    for (const auto& assignment : overrides) apply_override(doc, assignment);
    return build_config(doc);
}

// ---------------------------------------------------------------------------
// Serialization (round-trips bit-for-bit through load_config)

inline std::string serialize_profile(const ControlProfile& profile) {
    std::string out;
    for (std::size_t k = 0; k < profile.segments.size(); ++k) {
        if (k) out += ' ';
        out += format_double(profile.segments[k].t_start) + ":" +
               format_double(profile.segments[k].value);
    }
    return out;
}

inline std::string serialize_params(const ModelParams& p) {
    std::string out = "[params]\n";
    auto kv = [&](const char* key, double value) {
        out += std::string(key) + " = " + format_double(value) + "\n";
    };
    kv("lambda", p.lambda);
    kv("eta", p.eta);
    kv("D", p.D);
    kv("gamma_h", p.gamma_h);
    kv("gamma_c", p.gamma_c);
    kv("gamma_p", p.gamma_p);
    kv("alpha_h", p.alpha_h);
    kv("alpha_c", p.alpha_c);
    kv("S_h", p.S_h);
    kv("S_c", p.S_c);
    kv("M", p.M);
    kv("m_ref", p.m_ref);
    kv("rho", p.rho);
    kv("A", p.A);
    kv("sigma_l", p.sigma_l);
    kv("sigma_r", p.sigma_r);
    return out;
}

inline std::string serialize_config(const ModelParams& p, const TherapySchedule& schedule,
                                    const RunConfig& r) {
    std::string out = serialize_params(p);
    out += "\n[therapy]\n";
    out += "u = " + serialize_profile(schedule.u) + "\n";
    out += "s = " + serialize_profile(schedule.s) + "\n";
    out += "\n[run]\n";
    out += "dim = " + std::to_string(r.dim) + "\n";
    out += "nx = " + std::to_string(r.nx) + "\n";
    out += "ny = " + std::to_string(r.ny) + "\n";
    out += "lx = " + format_double(r.lx) + "\n";
    out += "ly = " + format_double(r.ly) + "\n";
    out += "dt = " + (r.dt > 0.0 ? format_double(r.dt) : std::string("auto")) + "\n";
    out += "t_end = " + format_double(r.t_end) + "\n";
    out += "output_every = " + std::to_string(r.output_every) + "\n";
    out += std::string("ic = ") +
           (r.ic == IcKind::Constant ? "constant" : r.ic == IcKind::Bump ? "bump" : "random") +
           "\n";
    out += "ic_phi = " + format_double(r.ic_phi) + "\n";
    if (r.ic_sigma) out += "ic_sigma = " + format_double(*r.ic_sigma) + "\n";
    if (r.ic_p) out += "ic_p = " + format_double(*r.ic_p) + "\n";
    out += "seed = " + std::to_string(r.seed) + "\n";
    out += "tau_bound = " + format_double(r.tau_bound) + "\n";
    out += "eps_conv = " + format_double(r.eps_conv) + "\n";
    out += std::string("snapshots = ") + (r.snapshots ? "true" : "false") + "\n";
    return out;
}

/// Hash of the model and therapy subset of a configuration, for sweep rows.
inline std::string params_hash(const ModelParams& p, const TherapySchedule& schedule) {
    const std::string text = serialize_params(p) + "u=" + serialize_profile(schedule.u) +
                             ";s=" + serialize_profile(schedule.s);
    return hex64(fnv1a64(text));
}

// ---------------------------------------------------------------------------
// Coefficient condition for the explicit exponential convergence rate

struct DecayCondition {
    bool holds = false;
    double lhs = 0.0;     // lambda * lambda1
    double rhs = 0.0;     // coupling terms consumed by the estimate
    double margin = 0.0;  // lhs - rhs
    double beta = 0.0;    // min(margin, gamma_p/2, gamma_h/2); meaningful when holds
};

/// Checks lambda*lambda1 against the coupling budget
/// |gamma_ch|^2 sigma_inf^2 / gamma_h + |alpha_ch|^2 / (2 gamma_p) + 2 f_sup
/// and derives the decay rate beta from the margin.
inline DecayCondition validate_decay_condition(const ModelParams& params,
                                               const TherapySchedule& /*schedule*/,
                                               double lambda1_value, double f_sup) {
    DecayCondition c;
    const double sigma_inf = params.sigma_infinity();
    c.lhs = params.lambda * lambda1_value;
    c.rhs = params.gamma_ch() * params.gamma_ch() * sigma_inf * sigma_inf / params.gamma_h +
            params.alpha_ch() * params.alpha_ch() / (2.0 * params.gamma_p) + 2.0 * f_sup;
    c.margin = c.lhs - c.rhs;
    c.holds = c.margin >= 0.0;
    c.beta = std::min({c.margin, params.gamma_p / 2.0, params.gamma_h / 2.0});
    return c;
}

}  // namespace pca
