#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "acousticpose/cli/config.hpp"

namespace acousticpose::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

struct SimulateArgs {
    std::filesystem::path out;
    bool force = false;
    std::optional<std::string> bgm_kind;  // overrides every track's kind
};

struct FeaturizeArgs {
    std::filesystem::path dataset;  // directory holding manifest.json
    std::filesystem::path out;
    bool force = false;
};

struct TrainArgs {
    std::filesystem::path data;  // feature directory, or a dataset directory (featurized into the cache)
    std::filesystem::path out;
    std::filesystem::path resume;
    bool force = false;
};

enum class Predictor { Model, Oracle, MeanPose };

struct EvalArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    std::filesystem::path out;
    Predictor predictor = Predictor::Model;
    bool force = false;
};

struct PcaStudyArgs {
    std::filesystem::path out;
    bool force = false;
};

int cmd_simulate(const RunConfig& config, const SimulateArgs& args, std::ostream& log);
// Returns kExitData when some records failed but the rest were written.
int cmd_featurize(const RunConfig& config, const FeaturizeArgs& args, std::ostream& log);
int cmd_train(const RunConfig& config, const TrainArgs& args, std::ostream& log);
int cmd_eval(const RunConfig& config, const EvalArgs& args, std::ostream& log);
int cmd_gradcheck(std::uint64_t seed, std::ostream& log);
int cmd_pca_study(const RunConfig& config, const PcaStudyArgs& args, std::ostream& log);

// Feature directory for `data`: used as-is when it holds index.json; a dataset
// directory is featurized once into $ACOUSTICPOSE_CACHE (or <data>/.features).
std::filesystem::path resolve_features(const RunConfig& config, const std::filesystem::path& data, std::ostream& log);

// Full command line entry point; maps exceptions to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace acousticpose::cli
