#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "percnn/fd_solver.hpp"

namespace percnn {

enum class Phase { train, extrapolation };

const char* to_string(Phase phase);

/// Accumulative RMSE per snapshot count k = 1..n.
struct ErrorCurve {
  std::vector<double> times;
  std::vector<double> rmse;
  std::vector<Phase> phase;

  std::size_t size() const { return rmse.size(); }
};

/// sqrt(sum_{i<k} |pred_i - ref_i|^2 / (n k)) with n = channels * cells.
double accumulative_rmse(const Trajectory& pred, const Trajectory& ref, std::size_t k);

/// Point k covers snapshots 0..k-1 and is tagged train while its last
/// snapshot index is <= train_end_index.
ErrorCurve error_curve(const Trajectory& pred, const Trajectory& ref,
                       std::size_t train_end_index);

/// `k,t,rmse,phase` rows.
void write_curve_csv(std::ostream& os, const ErrorCurve& curve);
/// Standalone SVG line chart of one or more curves sharing the time axis.
void write_curve_svg(std::ostream& os, const std::vector<ErrorCurve>& curves,
                     const std::vector<std::string>& labels, const std::string& title);

}  // namespace percnn
