#pragma once

#include "repro/gp.hpp"
#include "repro/seedctl.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace repro::hpo {

enum class ParamKind { continuous, integer, categorical };
enum class Scale { linear, log };

struct ParamSpec {
    std::string name;
    ParamKind kind = ParamKind::continuous;
    double lo = 0.0;
    double hi = 1.0;
    Scale scale = Scale::linear;
    std::vector<std::string> values;  // categorical only

    static ParamSpec continuous(std::string name, double lo, double hi, Scale scale = Scale::linear);
    static ParamSpec integer(std::string name, std::int64_t lo, std::int64_t hi, Scale scale = Scale::linear);
    static ParamSpec categorical(std::string name, std::vector<std::string> values);
};

struct ParamSpace {
    std::vector<ParamSpec> specs;

    [[nodiscard]] std::size_t encoded_dim() const;
};

// Throws InvalidSpace.
void validate_space(const ParamSpace& space);

using ParamValue = std::variant<double, std::int64_t, std::string>;
using Assignment = std::map<std::string, ParamValue>;

std::string value_text(const ParamValue& v);

// Unit-cube encoding; throws OutOfBounds(name) for missing, mistyped or
// out-of-range values.
std::vector<double> encode(const ParamSpace& space, const Assignment& a);
Assignment decode(const ParamSpace& space, std::span<const double> x);

Assignment suggest_random(const ParamSpace& space, seedctl::Stream& stream);

std::uint64_t grid_size(const ParamSpace& space, std::uint64_t resolution);
// Row-major over specs (last spec fastest). Throws IndexOutOfRange.
Assignment suggest_grid(const ParamSpace& space, std::uint64_t resolution, std::uint64_t index);

struct Observation {
    Assignment assignment;
    double objective = 0.0;
    std::uint64_t trial_index = 0;
};

struct StudyConfig {
    std::uint64_t init_random = 5;
    std::uint64_t candidates = 512;
    double xi = 0.01;
    double noise_floor = 1e-6;
};

StudyConfig default_config(const ParamSpace& space);

struct Study {
    ParamSpace space;
    Goal goal = Goal::maximize;
    std::vector<Observation> observations;
    StudyConfig config;
    std::uint64_t seed = 0;
    // Trials suggested so far, including failed ones that left no observation.
    std::uint64_t trials_attempted = 0;
};

Study make_study(ParamSpace space, Goal goal, std::uint64_t seed,
                 std::optional<StudyConfig> config = std::nullopt);

// Appends with trial_index = number of prior observations.
// Throws OutOfBounds / NonFiniteObjective.
Study& observe(Study& study, const Assignment& assignment, double objective);
// A trial that produced no objective still consumes a suggestion slot.
void record_failed_trial(Study& study);

std::optional<Observation> best_observed(const Study& study);

using WarningSink = std::function<void(const std::string&)>;

Assignment suggest_bayes(const Study& study, seedctl::Stream& stream, const WarningSink& warn = {});

enum class Method { bayes, random, grid };

// Per-trial stream: make_stream(derive_subseed(seed, "hpo/trial/<index>")),
// so a resumed study draws exactly what an uninterrupted one would.
seedctl::Stream trial_stream(const Study& study, std::uint64_t trial_index);

Assignment suggest_next(const Study& study, Method method, std::uint64_t grid_resolution = 5,
                        const WarningSink& warn = {});

// Runs suggest -> evaluate -> observe until `budget` trials have been
// attempted. An evaluation returning nullopt (a failed trial) consumes its
// trial index without adding an observation.
using Objective = std::function<std::optional<double>(const Assignment&, std::uint64_t trial_index)>;
void optimize(Study& study, std::uint64_t budget, Method method, const Objective& objective,
              std::uint64_t grid_resolution = 5, const WarningSink& warn = {});

std::string space_to_json(const ParamSpace& space);
ParamSpace space_from_json(const std::string& text);
std::string study_to_json(const Study& study);
Study study_from_json(const std::string& text);

// trial_index, one column per parameter (spec order), objective; best first.
std::string leaderboard_csv(const Study& study);

}  // namespace repro::hpo
