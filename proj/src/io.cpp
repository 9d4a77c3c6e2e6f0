#include "sgfm/io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace sgfm {

namespace {

constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  void need(std::size_t count, const char* what) const {
    if (in_.size() - pos_ < count)
      throw TruncatedPayloadError(std::string("truncated file: missing ") + what);
  }
  std::string_view bytes(std::size_t count, const char* what) {
    need(count, what);
    auto s = in_.substr(pos_, count);
    pos_ += count;
    return s;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= std::uint32_t(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= std::uint64_t(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

void header(Reader& r, std::string_view magic) {
  if (r.remaining() < magic.size() || r.bytes(magic.size(), "magic") != magic)
    throw MagicMismatchError("bad magic: expected " + std::string(magic));
  const auto version = r.u32("version");
  if (version != kVersion)
    throw VersionMismatchError("unsupported version " + std::to_string(version));
}

}  // namespace

std::string encode_field(const Field& f) {
  const auto& g = f.grid();
  Writer w;
  w.bytes("SGFF");
  w.u32(kVersion);
  w.u8(static_cast<std::uint8_t>(g.ndim));
  for (int a = 0; a < g.ndim; ++a) w.u32(static_cast<std::uint32_t>(g.n));
  w.u32(static_cast<std::uint32_t>(f.channels()));
  for (double v : f.data()) w.f64(v);
  return w.take();
}

Field decode_field(std::string_view bytes) {
  Reader r(bytes);
  header(r, "SGFF");
  const int ndim = r.u8("ndim");
  if (ndim != 2 && ndim != 3) throw FormatError("unsupported ndim " + std::to_string(ndim));
  std::uint32_t dims[3] = {0, 0, 0};
  for (int a = 0; a < ndim; ++a) dims[a] = r.u32("dims");
  for (int a = 1; a < ndim; ++a)
    if (dims[a] != dims[0]) throw FormatError("non-cubic grids are not supported");
  const std::uint32_t channels = r.u32("channels");
  if (channels == 0) throw FormatError("field has no channels");
  Grid grid;
  try {
    grid = make_grid(ndim, static_cast<int>(dims[0]));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  const std::size_t count = grid.size() * channels;
  if (r.remaining() != count * 8)
    throw TruncatedPayloadError("payload length " + std::to_string(r.remaining()) +
                                " bytes, expected " + std::to_string(count * 8));
  std::vector<double> data(count);
  for (auto& v : data) v = r.f64("payload");
  return Field(grid, static_cast<int>(channels), std::move(data));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_field(const std::filesystem::path& path, const Field& f) {
  write_file(path, encode_field(f));
}

Field read_field(const std::filesystem::path& path) { return decode_field(read_file(path)); }

// ---------------------------------------------------------------------------

LocalScoreNet Checkpoint::make_model() const {
  LocalScoreNet net(model, 0);
  net.set_parameters(parameters);
  return net;
}

Checkpoint make_checkpoint(const LocalScoreNet& model, const DiffusionSetup& setup) {
  return {model.config(), setup, model.parameters()};
}

std::string encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes("SGFC");
  w.u32(kVersion);
  w.u8(static_cast<std::uint8_t>(c.model.ndim));
  w.u32(static_cast<std::uint32_t>(c.model.channels));
  w.u32(static_cast<std::uint32_t>(c.model.hidden));
  w.u32(static_cast<std::uint32_t>(c.model.param_dim));
  w.u8(static_cast<std::uint8_t>(c.diffusion.family.kind()));
  w.u32(static_cast<std::uint32_t>(c.diffusion.levels));
  w.u32(static_cast<std::uint32_t>(c.diffusion.j_split));
  w.f64(c.model.schedule.beta_min);
  w.f64(c.model.schedule.beta_max);
  w.u32(static_cast<std::uint32_t>(c.parameters.size()));
  for (double v : c.parameters) w.f64(v);
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  header(r, "SGFC");
  Checkpoint c;
  c.model.ndim = r.u8("ndim");
  c.model.channels = static_cast<int>(r.u32("channels"));
  c.model.hidden = static_cast<int>(r.u32("hidden"));
  c.model.param_dim = static_cast<int>(r.u32("param_dim"));
  const auto family = r.u8("family");
  if (family > static_cast<std::uint8_t>(WaveletKind::Daubechies4))
    throw FormatError("unknown wavelet family id " + std::to_string(family));
  c.diffusion.family = WaveletFamily::from_kind(static_cast<WaveletKind>(family));
  c.diffusion.levels = static_cast<int>(r.u32("levels"));
  c.diffusion.j_split = static_cast<int>(r.u32("j_split"));
  c.model.schedule.beta_min = r.f64("beta_min");
  c.model.schedule.beta_max = r.f64("beta_max");
  c.diffusion.schedule = c.model.schedule;
  const std::uint32_t count = r.u32("count");
  if (r.remaining() != std::size_t(count) * 8)
    throw TruncatedPayloadError("checkpoint payload length mismatch");
  c.parameters.resize(count);
  for (auto& v : c.parameters) v = r.f64("parameters");
  try {
    (void)c.make_model();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("inconsistent checkpoint: ") + e.what());
  }
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file(path, encode_checkpoint(c));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

// ---------------------------------------------------------------------------

namespace {

std::filesystem::path snapshot_path(const std::filesystem::path& dir, std::size_t i) {
  char name[32];
  std::snprintf(name, sizeof name, "snap_%05zu.sgff", i);
  return dir / name;
}

}  // namespace

void write_trajectory(const std::filesystem::path& dir, const Trajectory& traj) {
  if (traj.empty()) throw std::invalid_argument("cannot write an empty trajectory");
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["version"] = kVersion;
  meta["dt"] = traj.dt();
  meta["time0"] = traj.front().time;
  meta["snapshots"] = traj.size();
  write_file(dir / "trajectory.json", meta.dump(2) + "\n");
  for (std::size_t i = 0; i < traj.size(); ++i)
    write_field(snapshot_path(dir, i), traj[i].field);
}

Trajectory read_trajectory(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir / "trajectory.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad trajectory metadata: ") + e.what());
  }
  if (meta.value("version", 0u) != kVersion)
    throw VersionMismatchError("unsupported trajectory version");
  const double dt = meta.at("dt").get<double>();
  const double time0 = meta.at("time0").get<double>();
  const auto count = meta.at("snapshots").get<std::size_t>();
  if (count == 0) throw FormatError("trajectory has no snapshots");
  Trajectory traj(dt);
  for (std::size_t i = 0; i < count; ++i) {
    Field f = read_field(snapshot_path(dir, i));
    if (i > 0 && !f.same_shape(traj.front().field))
      throw FormatError("snapshot shapes differ");
    traj.push(std::move(f), time0);
  }
  return traj;
}

// ---------------------------------------------------------------------------

void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<LossRecord>& history) {
  std::ostringstream out;
  out << std::setprecision(17) << "epoch,total,diff,phys,bc\n";
  for (const auto& r : history)
    out << r.epoch << ',' << r.total << ',' << r.diff << ',' << r.phys << ',' << r.bc
        << '\n';
  write_file(path, out.str());
}

void write_energy_csv(const std::filesystem::path& path, const EnergyReport& report) {
  std::ostringstream out;
  out << std::setprecision(17)
      << "time,kinetic_energy,enstrophy,dissipation,lhs,bound_rhs\n";
  for (std::size_t i = 0; i < report.times.size(); ++i)
    out << report.times[i] << ',' << report.kinetic_energy[i] << ','
        << report.enstrophy[i] << ',' << report.dissipation[i] << ',' << report.lhs[i]
        << ',' << report.bound_rhs[i] << '\n';
  write_file(path, out.str());
}

}  // namespace sgfm
