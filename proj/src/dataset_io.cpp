#include "percnn/dataset_io.hpp"

#include <fstream>

#include "percnn/binary_io.hpp"

namespace percnn {

void write_dataset(std::ostream& os, const Trajectory& traj, DatasetKind kind) {
  traj.validate();
  const Field& first = traj[0];
  BinaryWriter w(os);
  w.magic("PCNF");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(kind));
  w.u32(static_cast<std::uint32_t>(first.channels()));
  w.u32(static_cast<std::uint32_t>(first.rank()));
  for (auto e : first.extents()) w.u64(e);
  w.f64(traj.dt);
  w.f64(traj.t0);
  for (double dx : first.spacing()) w.f64(dx);
  w.u64(traj.size());
  for (const auto& f : traj.fields) w.raw(f.values().data(), f.size() * sizeof(double));
}

Dataset read_dataset(std::istream& is) {
  BinaryReader r(is);
  r.expect_magic("PCNF");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion)
    throw IoError("unsupported dataset version " + std::to_string(version));
  Dataset ds;
  const std::uint32_t kind = r.u32();
  if (kind > 3) throw IoError("unknown dataset kind tag " + std::to_string(kind));
  ds.kind = static_cast<DatasetKind>(kind);
  const std::uint32_t channels = r.u32();
  const std::uint32_t rank = r.u32();
  if (rank < 1 || rank > 3 || channels == 0) throw IoError("corrupt dataset header");
  Extents ext(rank);
  for (auto& e : ext) e = r.u64();
  ds.trajectory.dt = r.f64();
  ds.trajectory.t0 = r.f64();
  std::vector<double> spacing(rank);
  for (auto& dx : spacing) dx = r.f64();
  const std::uint64_t count = r.u64();
  const std::size_t per = channels * product_of(ext);
  ds.trajectory.fields.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    std::vector<double> values;
    r.f64s(values, per);
    ds.trajectory.fields.emplace_back(channels, ext, spacing, std::move(values));
  }
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Trajectory& traj,
                   DatasetKind kind) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_dataset(os, traj, kind);
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_dataset(is);
}

}  // namespace percnn
