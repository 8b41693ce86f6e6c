#include "repro/hpo.hpp"

#include "repro/error.hpp"
#include "repro/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>

namespace repro::hpo {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

ParamSpec ParamSpec::continuous(std::string name, double lo, double hi, Scale scale) {
    ParamSpec s;
    s.name = std::move(name);
    s.kind = ParamKind::continuous;
    s.lo = lo;
    s.hi = hi;
    s.scale = scale;
    return s;
}

ParamSpec ParamSpec::integer(std::string name, std::int64_t lo, std::int64_t hi, Scale scale) {
    ParamSpec s;
    s.name = std::move(name);
    s.kind = ParamKind::integer;
    s.lo = static_cast<double>(lo);
    s.hi = static_cast<double>(hi);
    s.scale = scale;
    return s;
}

ParamSpec ParamSpec::categorical(std::string name, std::vector<std::string> values) {
    ParamSpec s;
    s.name = std::move(name);
    s.kind = ParamKind::categorical;
    s.values = std::move(values);
    return s;
}

std::size_t ParamSpace::encoded_dim() const {
    std::size_t d = 0;
    for (const auto& s : specs) d += s.kind == ParamKind::categorical ? s.values.size() : 1;
    return d;
}

void validate_space(const ParamSpace& space) {
    if (space.specs.empty()) fail(Errc::InvalidSpace, "no parameters");
    std::set<std::string> names;
    for (const auto& s : space.specs) {
        if (s.name.empty()) fail(Errc::InvalidSpace, "empty parameter name");
        if (!names.insert(s.name).second) fail(Errc::InvalidSpace, "duplicate parameter " + s.name);
        if (s.kind == ParamKind::categorical) {
            if (s.values.empty()) fail(Errc::InvalidSpace, s.name + ": no values");
            std::set<std::string> uniq(s.values.begin(), s.values.end());
            if (uniq.size() != s.values.size()) fail(Errc::InvalidSpace, s.name + ": duplicate values");
            continue;
        }
        if (!std::isfinite(s.lo) || !std::isfinite(s.hi) || !(s.lo < s.hi))
            fail(Errc::InvalidSpace, s.name + ": requires lo < hi");
        if (s.scale == Scale::log && !(s.lo > 0.0))
            fail(Errc::InvalidSpace, s.name + ": log scale requires lo > 0");
        if (s.kind == ParamKind::integer && (std::floor(s.lo) != s.lo || std::floor(s.hi) != s.hi))
            fail(Errc::InvalidSpace, s.name + ": integer bounds must be integral");
    }
}

std::string value_text(const ParamValue& v) {
    if (const auto* d = std::get_if<double>(&v)) return format_double(*d);
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    return std::get<std::string>(v);
}

namespace {

double to_unit(const ParamSpec& s, double v) {
    if (s.scale == Scale::log) return (std::log(v) - std::log(s.lo)) / (std::log(s.hi) - std::log(s.lo));
    return (v - s.lo) / (s.hi - s.lo);
}

double from_unit(const ParamSpec& s, double u) {
    u = std::clamp(u, 0.0, 1.0);
    double v = s.scale == Scale::log
                   ? std::exp(std::log(s.lo) + u * (std::log(s.hi) - std::log(s.lo)))
                   : s.lo + u * (s.hi - s.lo);
    return std::clamp(v, s.lo, s.hi);
}

ParamValue numeric_value(const ParamSpec& s, double v) {
    if (s.kind == ParamKind::integer)
        return static_cast<std::int64_t>(std::clamp(std::round(v), s.lo, s.hi));
    return v;
}

}  // namespace

std::vector<double> encode(const ParamSpace& space, const Assignment& a) {
    std::vector<double> x;
    x.reserve(space.encoded_dim());
    for (const auto& s : space.specs) {
        auto it = a.find(s.name);
        if (it == a.end()) fail(Errc::OutOfBounds, s.name + ": missing");
        const ParamValue& v = it->second;
        if (s.kind == ParamKind::categorical) {
            const auto* str = std::get_if<std::string>(&v);
            if (!str) fail(Errc::OutOfBounds, s.name + ": expected a category");
            auto pos = std::find(s.values.begin(), s.values.end(), *str);
            if (pos == s.values.end()) fail(Errc::OutOfBounds, s.name + ": unknown category " + *str);
            for (std::size_t i = 0; i < s.values.size(); ++i)
                x.push_back(static_cast<std::ptrdiff_t>(i) == pos - s.values.begin() ? 1.0 : 0.0);
            continue;
        }
        double num;
        if (s.kind == ParamKind::integer) {
            const auto* iv = std::get_if<std::int64_t>(&v);
            if (!iv) fail(Errc::OutOfBounds, s.name + ": expected an integer");
            num = static_cast<double>(*iv);
        } else if (const auto* dv = std::get_if<double>(&v)) {
            num = *dv;
        } else if (const auto* iv = std::get_if<std::int64_t>(&v)) {
            num = static_cast<double>(*iv);
        } else {
            fail(Errc::OutOfBounds, s.name + ": expected a number");
        }
        if (!std::isfinite(num) || num < s.lo || num > s.hi)
            fail(Errc::OutOfBounds, s.name + ": " + value_text(v) + " outside [" + format_double(s.lo) +
                                        ", " + format_double(s.hi) + "]");
        x.push_back(to_unit(s, num));
    }
    if (a.size() != space.specs.size()) fail(Errc::OutOfBounds, "assignment has unknown parameters");
    return x;
}

Assignment decode(const ParamSpace& space, std::span<const double> x) {
    Assignment a;
    std::size_t k = 0;
    for (const auto& s : space.specs) {
        if (s.kind == ParamKind::categorical) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < s.values.size(); ++i)
                if (x[k + i] > x[k + best]) best = i;
            a[s.name] = s.values[best];
            k += s.values.size();
            continue;
        }
        a[s.name] = numeric_value(s, from_unit(s, x[k]));
        ++k;
    }
    return a;
}

Assignment suggest_random(const ParamSpace& space, seedctl::Stream& stream) {
    Assignment a;
    for (const auto& s : space.specs) {
        if (s.kind == ParamKind::categorical) {
            a[s.name] = s.values[stream.next_below(s.values.size())];
        } else if (s.kind == ParamKind::integer && s.scale == Scale::linear) {
            const auto span = static_cast<std::uint64_t>(s.hi - s.lo) + 1;
            a[s.name] = static_cast<std::int64_t>(s.lo) + static_cast<std::int64_t>(stream.next_below(span));
        } else {
            a[s.name] = numeric_value(s, from_unit(s, stream.next_unit_float()));
        }
    }
    return a;
}

namespace {

std::uint64_t axis_size(const ParamSpec& s, std::uint64_t resolution) {
    return s.kind == ParamKind::categorical ? s.values.size() : resolution;
}

}  // namespace

std::uint64_t grid_size(const ParamSpace& space, std::uint64_t resolution) {
    std::uint64_t total = 1;
    for (const auto& s : space.specs) total *= axis_size(s, resolution);
    return total;
}

Assignment suggest_grid(const ParamSpace& space, std::uint64_t resolution, std::uint64_t index) {
    const auto total = grid_size(space, resolution);
    if (resolution == 0 || index >= total)
        fail(Errc::IndexOutOfRange, std::to_string(index) + " of " + std::to_string(total));
    Assignment a;
    std::uint64_t rest = index;
    for (std::size_t i = space.specs.size(); i-- > 0;) {
        const auto& s = space.specs[i];
        const auto size = axis_size(s, resolution);
        const auto k = rest % size;
        rest /= size;
        if (s.kind == ParamKind::categorical) {
            a[s.name] = s.values[k];
        } else {
            const double u = size == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(size - 1);
            a[s.name] = numeric_value(s, from_unit(s, u));
        }
    }
    return a;
}

StudyConfig default_config(const ParamSpace& space) {
    StudyConfig c;
    c.init_random = std::max<std::uint64_t>(5, 2 * space.encoded_dim());
    return c;
}

Study make_study(ParamSpace space, Goal goal, std::uint64_t seed, std::optional<StudyConfig> config) {
    validate_space(space);
    Study st;
    st.config = config ? *config : default_config(space);
    if (st.config.init_random < 1 || st.config.candidates < 1 || !(st.config.xi >= 0.0) ||
        !(st.config.noise_floor >= 0.0))
        fail(Errc::InvalidSpace, "study config requires init_random >= 1, candidates >= 1, xi >= 0");
    st.space = std::move(space);
    st.goal = goal;
    st.seed = seed;
    return st;
}

Study& observe(Study& study, const Assignment& assignment, double objective) {
    encode(study.space, assignment);
    if (!std::isfinite(objective)) fail(Errc::NonFiniteObjective, format_double(objective));
    Observation o;
    o.assignment = assignment;
    o.objective = objective;
    o.trial_index = study.observations.size();
    study.observations.push_back(std::move(o));
    ++study.trials_attempted;
    return study;
}

void record_failed_trial(Study& study) { ++study.trials_attempted; }

std::optional<Observation> best_observed(const Study& study) {
    std::optional<Observation> best;
    for (const auto& o : study.observations) {
        const bool better = !best || (study.goal == Goal::maximize ? o.objective > best->objective
                                                                   : o.objective < best->objective);
        if (better) best = o;
    }
    return best;
}

Assignment suggest_bayes(const Study& study, seedctl::Stream& stream, const WarningSink& warn) {
    if (study.observations.size() < study.config.init_random) return suggest_random(study.space, stream);

    Points xs;
    std::vector<double> ys;
    for (const auto& o : study.observations) {
        xs.push_back(encode(study.space, o.assignment));
        ys.push_back(o.objective);
    }
    GpModel gp;
    try {
        GpConfig cfg;
        cfg.noise_floor = study.config.noise_floor;
        gp = fit_gp(xs, ys, cfg);
    } catch (const Error& e) {
        if (warn) warn(std::string("surrogate fit failed, falling back to random: ") + e.what());
        return suggest_random(study.space, stream);
    }

    const double best = best_observed(study)->objective;
    const std::size_t d = study.space.encoded_dim();
    std::vector<double> u(d);
    std::vector<double> best_u;
    double best_ei = -1.0;
    for (std::uint64_t c = 0; c < study.config.candidates; ++c) {
        for (auto& v : u) v = stream.next_unit_float();
        // Score the point that would actually be run (categoricals snapped, integers rounded).
        const auto projected = encode(study.space, decode(study.space, u));
        const Posterior p = posterior(gp, projected);
        const double ei = expected_improvement(p.mu, p.sigma, best, study.config.xi, study.goal);
        if (ei > best_ei) {
            best_ei = ei;
            best_u = u;
        }
    }
    return decode(study.space, best_u);
}

seedctl::Stream trial_stream(const Study& study, std::uint64_t trial_index) {
    return seedctl::make_stream(
        seedctl::derive_subseed(study.seed, "hpo/trial/" + std::to_string(trial_index)));
}

Assignment suggest_next(const Study& study, Method method, std::uint64_t grid_resolution,
                        const WarningSink& warn) {
    auto stream = trial_stream(study, study.trials_attempted);
    switch (method) {
        case Method::random: return suggest_random(study.space, stream);
        case Method::grid: return suggest_grid(study.space, grid_resolution, study.trials_attempted);
        case Method::bayes: break;
    }
    return suggest_bayes(study, stream, warn);
}

void optimize(Study& study, std::uint64_t budget, Method method, const Objective& objective,
              std::uint64_t grid_resolution, const WarningSink& warn) {
    while (study.trials_attempted < budget) {
        const auto trial = study.trials_attempted;
        const Assignment a = suggest_next(study, method, grid_resolution, warn);
        const auto value = objective(a, trial);
        if (value)
            observe(study, a, *value);
        else
            record_failed_trial(study);
    }
}

namespace {

std::string_view kind_name(ParamKind k) {
    switch (k) {
        case ParamKind::continuous: return "continuous";
        case ParamKind::integer: return "integer";
        case ParamKind::categorical: return "categorical";
    }
    return "continuous";
}

ojson space_json(const ParamSpace& space) {
    ojson params = ojson::array();
    for (const auto& s : space.specs) {
        ojson p;
        p["name"] = s.name;
        p["type"] = std::string(kind_name(s.kind));
        if (s.kind == ParamKind::categorical) {
            p["values"] = s.values;
        } else {
            if (s.kind == ParamKind::integer) {
                p["lo"] = static_cast<std::int64_t>(s.lo);
                p["hi"] = static_cast<std::int64_t>(s.hi);
            } else {
                p["lo"] = s.lo;
                p["hi"] = s.hi;
            }
            p["scale"] = s.scale == Scale::log ? "log" : "linear";
        }
        params.push_back(std::move(p));
    }
    ojson doc;
    doc["params"] = std::move(params);
    return doc;
}

[[noreturn]] void bad_space(const std::string& why) { fail(Errc::InvalidSpace, why); }

ParamSpace parse_space(const json& doc) {
    if (!doc.is_object() || !doc.contains("params") || !doc["params"].is_array())
        bad_space("expected {\"params\": [...]}");
    ParamSpace space;
    for (const auto& p : doc["params"]) {
        if (!p.is_object() || !p.contains("name") || !p.contains("type")) bad_space("param needs name and type");
        ParamSpec s;
        s.name = p["name"].get<std::string>();
        const auto type = p["type"].get<std::string>();
        if (type == "categorical") {
            s.kind = ParamKind::categorical;
            if (!p.contains("values") || !p["values"].is_array()) bad_space(s.name + ": values required");
            for (const auto& v : p["values"]) s.values.push_back(v.get<std::string>());
        } else if (type == "continuous" || type == "integer") {
            s.kind = type == "integer" ? ParamKind::integer : ParamKind::continuous;
            if (!p.contains("lo") || !p.contains("hi") || !p["lo"].is_number() || !p["hi"].is_number())
                bad_space(s.name + ": numeric lo and hi required");
            s.lo = p["lo"].get<double>();
            s.hi = p["hi"].get<double>();
            const auto scale = p.value("scale", std::string("linear"));
            if (scale == "log")
                s.scale = Scale::log;
            else if (scale != "linear")
                bad_space(s.name + ": unknown scale " + scale);
        } else {
            bad_space(s.name + ": unknown type " + type);
        }
        space.specs.push_back(std::move(s));
    }
    validate_space(space);
    return space;
}

ojson value_json(const ParamValue& v) {
    if (const auto* d = std::get_if<double>(&v)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    return std::get<std::string>(v);
}

ParamValue parse_value(const ParamSpec& s, const json& v) {
    if (s.kind == ParamKind::categorical) {
        if (!v.is_string()) bad_space(s.name + ": expected string value");
        return v.get<std::string>();
    }
    if (s.kind == ParamKind::integer) {
        if (!v.is_number_integer()) bad_space(s.name + ": expected integer value");
        return v.get<std::int64_t>();
    }
    if (!v.is_number()) bad_space(s.name + ": expected numeric value");
    return v.get<double>();
}

}  // namespace

std::string space_to_json(const ParamSpace& space) { return space_json(space).dump(2) + "\n"; }

ParamSpace space_from_json(const std::string& text) {
    try {
        return parse_space(json::parse(text));
    } catch (const json::exception& e) {
        bad_space(e.what());
    }
}

std::string study_to_json(const Study& study) {
    ojson doc;
    doc["space"] = space_json(study.space);
    doc["goal"] = study.goal == Goal::maximize ? "maximize" : "minimize";
    ojson cfg;
    cfg["init_random"] = study.config.init_random;
    cfg["candidates"] = study.config.candidates;
    cfg["xi"] = study.config.xi;
    cfg["noise_floor"] = study.config.noise_floor;
    doc["config"] = std::move(cfg);
    doc["seed"] = study.seed;
    doc["trials_attempted"] = study.trials_attempted;
    ojson obs = ojson::array();
    for (const auto& o : study.observations) {
        ojson entry;
        entry["trial_index"] = o.trial_index;
        ojson assignment;
        for (const auto& s : study.space.specs) assignment[s.name] = value_json(o.assignment.at(s.name));
        entry["assignment"] = std::move(assignment);
        entry["objective"] = o.objective;
        obs.push_back(std::move(entry));
    }
    doc["observations"] = std::move(obs);
    return doc.dump(2) + "\n";
}

Study study_from_json(const std::string& text) {
    try {
        const json doc = json::parse(text);
        Study st;
        st.space = parse_space(doc.at("space"));
        const auto goal = doc.at("goal").get<std::string>();
        if (goal == "maximize")
            st.goal = Goal::maximize;
        else if (goal == "minimize")
            st.goal = Goal::minimize;
        else
            bad_space("unknown goal " + goal);
        const auto& cfg = doc.at("config");
        st.config.init_random = cfg.at("init_random").get<std::uint64_t>();
        st.config.candidates = cfg.at("candidates").get<std::uint64_t>();
        st.config.xi = cfg.at("xi").get<double>();
        st.config.noise_floor = cfg.at("noise_floor").get<double>();
        st.seed = doc.at("seed").get<std::uint64_t>();
        for (const auto& entry : doc.at("observations")) {
            Observation o;
            o.trial_index = entry.at("trial_index").get<std::uint64_t>();
            o.objective = entry.at("objective").get<double>();
            for (const auto& s : st.space.specs)
                o.assignment[s.name] = parse_value(s, entry.at("assignment").at(s.name));
            encode(st.space, o.assignment);
            st.observations.push_back(std::move(o));
        }
        st.trials_attempted = doc.at("trials_attempted").get<std::uint64_t>();
        if (st.trials_attempted < st.observations.size()) bad_space("trials_attempted below observation count");
        return st;
    } catch (const json::exception& e) {
        bad_space(e.what());
    }
}

std::string leaderboard_csv(const Study& study) {
    std::vector<const Observation*> order;
    for (const auto& o : study.observations) order.push_back(&o);
    std::stable_sort(order.begin(), order.end(), [&](const Observation* a, const Observation* b) {
        return study.goal == Goal::maximize ? a->objective > b->objective : a->objective < b->objective;
    });
    std::string out = "trial_index";
    for (const auto& s : study.space.specs) out += "," + s.name;
    out += ",objective\n";
    for (const auto* o : order) {
        out += std::to_string(o->trial_index);
        for (const auto& s : study.space.specs) out += "," + value_text(o->assignment.at(s.name));
        out += "," + format_double(o->objective) + "\n";
    }
    return out;
}

}  // namespace repro::hpo
