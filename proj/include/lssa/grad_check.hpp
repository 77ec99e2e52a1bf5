#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lssa/lstm.hpp"

namespace lssa {

enum class GradCheckTarget { lm, ae, classifier };

std::string grad_check_target_name(GradCheckTarget t);
/// "lm", "ae", "classifier". Throws ConfigError.
GradCheckTarget parse_grad_check_target(std::string_view text);

struct GradCheckOptions {
    double eps = 1e-5;
    std::size_t batch_size = 4;  ///< random sequences in the probe batch
    std::size_t max_words = 6;   ///< each has 1..max_words words
    double init_range = 0.5;     ///< every weight, biases included, uniform in ±init_range
};

struct GradCheckResult {
    double max_rel_error = 0.0;  ///< max over parameter tensors
    std::string worst_param;
    std::vector<std::pair<std::string, double>> per_param;
    double max_abs_error = 0.0;  ///< largest single-coordinate |a - n|
    std::string worst_coordinate_param;
    std::size_t worst_index = 0;
    std::size_t coordinates = 0;
    std::string warning;  ///< set when nothing could be checked
};

/// Compares the analytic gradient of the batch's mean loss with central
/// differences for every parameter coordinate, dropout and clipping off.
/// Each parameter tensor scores ||a - n|| / max(1e-8, ||a|| + ||n||) over
/// its coordinates; the result is the worst tensor.
GradCheckResult grad_check(GradCheckTarget target, const ModelConfig& cfg, std::uint64_t seed,
                           const GradCheckOptions& opts = {});

/// The tiny configuration used by default: V=20, E=8, H=12, two layers.
ModelConfig tiny_config();

}  // namespace lssa
