#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "percnn/fd_solver.hpp"

namespace percnn {

inline constexpr std::uint32_t kDatasetVersion = 1;

/// Producer tag stored in the dataset header: a SystemKind value for
/// reference data, or `model` for network predictions.
enum class DatasetKind : std::uint32_t {
  model = 0,
  burgers2d = 1,
  grayscott2d = 2,
  grayscott3d = 3,
};

inline DatasetKind dataset_kind(SystemKind kind) {
  return static_cast<DatasetKind>(static_cast<std::uint32_t>(kind));
}

struct Dataset {
  DatasetKind kind = DatasetKind::model;
  Trajectory trajectory;
};

/// "PCNF" layout: magic, version u32, kind u32, channels u32, rank u32,
/// extents u64[rank], dt f64, t0 f64, spacing f64[rank], snapshots u64,
/// then f64 payload ordered time, channel, row-major cells.
void write_dataset(std::ostream& os, const Trajectory& traj, DatasetKind kind);
Dataset read_dataset(std::istream& is);

void write_dataset(const std::filesystem::path& path, const Trajectory& traj,
                   DatasetKind kind);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace percnn
