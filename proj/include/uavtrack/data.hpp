#pragma once

// Trajectory recording types, action-chunk extraction, frame stacking,
// normalization statistics, the UTD1 episode file format and the on-disk
// dataset layout.

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "uavtrack/geometry.hpp"
#include "uavtrack/language.hpp"
#include "uavtrack/raster.hpp"
#include "uavtrack/sim.hpp"

namespace uavtrack::data {

inline constexpr int kChunkLen = 25;
inline constexpr int kActionDim = 4;
inline constexpr int kStackSize = 4;

using ChunkMatrix = Eigen::Matrix<double, Eigen::Dynamic, kActionDim, Eigen::RowMajor>;

/// k x 4 future displacements [dx, dy, dz, dpsi], expressed in the UAV yaw
/// frame at the decision tick.
struct ActionChunk {
  ChunkMatrix steps = ChunkMatrix::Zero(kChunkLen, kActionDim);

  int k() const { return static_cast<int>(steps.rows()); }
  bool all_finite() const { return steps.allFinite(); }
};

/// Chunk for decision tick t from a per-tick pose trajectory; ticks past the
/// end repeat the final pose (zero displacement).
inline ActionChunk compute_action_chunk(std::span<const geometry::Pose6D> trajectory, int t, int k = kChunkLen) {
  if (trajectory.empty()) throw Error("compute_action_chunk: empty trajectory");
  if (t < 0 || t >= static_cast<int>(trajectory.size())) throw Error("compute_action_chunk: tick out of range");
  const int last = static_cast<int>(trajectory.size()) - 1;
  auto at = [&](int i) -> const geometry::Pose6D& { return trajectory[static_cast<std::size_t>(std::min(i, last))]; };
  const double yaw0 = trajectory[static_cast<std::size_t>(t)].yaw;
  const double c = std::cos(yaw0), s = std::sin(yaw0);
  ActionChunk chunk;
  chunk.steps = ChunkMatrix::Zero(k, kActionDim);
  for (int i = 1; i <= k; ++i) {
    const auto& a = at(t + i - 1);
    const auto& b = at(t + i);
    const double wx = b.x - a.x, wy = b.y - a.y;
    chunk.steps(i - 1, 0) = c * wx + s * wy;
    chunk.steps(i - 1, 1) = -s * wx + c * wy;
    chunk.steps(i - 1, 2) = b.z - a.z;
    chunk.steps(i - 1, 3) = wrap_angle(b.yaw - a.yaw);
  }
  return chunk;
}

/// Inverse of compute_action_chunk: pose after executing the first n steps.
inline geometry::Pose6D integrate_chunk(const geometry::Pose6D& start, const ActionChunk& chunk, int n = -1) {
  if (n < 0) n = chunk.k();
  geometry::Pose6D p = start;
  const double c = std::cos(start.yaw), s = std::sin(start.yaw);
  for (int i = 0; i < n; ++i) {
    p.x += c * chunk.steps(i, 0) - s * chunk.steps(i, 1);
    p.y += s * chunk.steps(i, 0) + c * chunk.steps(i, 1);
    p.z += chunk.steps(i, 2);
    p.yaw = wrap_angle(p.yaw + chunk.steps(i, 3));
  }
  return p;
}

/// Re-expresses chunk row i (decision-frame displacement) in the UAV's
/// current yaw frame so step_world can apply it.
inline ActionStep chunk_step_in_current_frame(const ActionChunk& chunk, int i, double decision_yaw, double current_yaw) {
  const double d = decision_yaw - current_yaw;
  const double c = std::cos(d), s = std::sin(d);
  const double x = chunk.steps(i, 0), y = chunk.steps(i, 1);
  return {c * x - s * y, s * x + c * y, chunk.steps(i, 2), chunk.steps(i, 3)};
}

using FrameStack = std::array<RasterFrame, kStackSize>;

/// Slots [t-3, t-2, t-1, t]; slots before the first frame are black.
inline FrameStack make_frame_stack(std::span<const RasterFrame> frames, int t) {
  if (t < 0 || t >= static_cast<int>(frames.size())) throw Error("make_frame_stack: vision tick out of range");
  const RasterFrame& cur = frames[static_cast<std::size_t>(t)];
  FrameStack stack;
  for (int slot = 0; slot < kStackSize; ++slot) {
    const int idx = t - (kStackSize - 1) + slot;
    stack[static_cast<std::size_t>(slot)] = idx < 0 ? RasterFrame(cur.width, cur.height) : frames[static_cast<std::size_t>(idx)];
  }
  return stack;
}

inline int black_frame_count(int t) { return std::max(0, kStackSize - 1 - t); }

using Vec4f = Eigen::Vector4f;
using ChunkMatrixF = Eigen::Matrix<float, Eigen::Dynamic, kActionDim, Eigen::RowMajor>;

/// One 25 Hz tick as recorded on disk.
struct ControlTick {
  Vec4f position = Vec4f::Zero();  // UAV x, y, z, yaw (world)
  Vec4f state = Vec4f::Zero();     // S_t
  Vec4f action = Vec4f::Zero();    // executed ActionStep
  Vec4f pose = Vec4f::Zero();      // target RelativePose
  bool operator==(const ControlTick&) const = default;
};

/// One 5 Hz tick: observation frame plus supervision.
struct VisionTick {
  std::uint32_t control_tick = 0;
  float timestamp = 0.0f;
  Vec4f state = Vec4f::Zero();
  Vec4f pose = Vec4f::Zero();
  ChunkMatrixF chunk = ChunkMatrixF::Zero(kChunkLen, kActionDim);
  RasterFrame frame;
  bool operator==(const VisionTick&) const = default;
};

struct EpisodeRecord {
  sim::EpisodeConfig config;
  sim::WeatherParams weather;
  std::string prompt;
  std::uint32_t episode_index = 0;
  std::uint32_t task_index = 0;
  int frame_width = 0;
  int frame_height = 0;
  int chunk_len = kChunkLen;
  std::vector<ControlTick> control;
  std::vector<VisionTick> vision;

  void validate() const {
    const int tpf = config.ticks_per_frame();
    const std::size_t expect = (control.size() + static_cast<std::size_t>(tpf) - 1) / static_cast<std::size_t>(tpf);
    if (vision.size() != expect)
      throw Error("EpisodeRecord: " + std::to_string(vision.size()) + " vision ticks for " +
                  std::to_string(control.size()) + " control ticks");
    for (const auto& v : vision) {
      if (v.frame.width != frame_width || v.frame.height != frame_height)
        throw Error("EpisodeRecord: frame dimensions do not match header");
      if (v.chunk.rows() != chunk_len) throw Error("EpisodeRecord: chunk length mismatch");
    }
  }
  bool operator==(const EpisodeRecord&) const = default;
};

/// Per-sample view used for training and evaluation.
struct FrameSample {
  FrameStack frames;
  Eigen::Vector4d state = Eigen::Vector4d::Zero();
  geometry::RelativePose pose;
  ActionChunk chunk;
  float timestamp = 0.0f;
  std::uint32_t frame_index = 0;
  std::uint32_t episode_index = 0;
  std::uint32_t task_index = 0;
};

inline FrameSample frame_sample(const EpisodeRecord& rec, int vision_tick) {
  std::vector<RasterFrame> frames;
  frames.reserve(rec.vision.size());
  for (const auto& v : rec.vision) frames.push_back(v.frame);
  const auto& v = rec.vision.at(static_cast<std::size_t>(vision_tick));
  FrameSample s;
  s.frames = make_frame_stack(frames, vision_tick);
  s.state = v.state.cast<double>();
  s.pose = {v.pose[0], v.pose[1], v.pose[2], v.pose[3]};
  s.chunk.steps = v.chunk.cast<double>();
  s.timestamp = v.timestamp;
  s.frame_index = static_cast<std::uint32_t>(vision_tick);
  s.episode_index = rec.episode_index;
  s.task_index = rec.task_index;
  return s;
}

// ---------------------------------------------------------------------------
// Normalization

struct NormStats {
  Eigen::Vector4d action_mean = Eigen::Vector4d::Zero(), action_std = Eigen::Vector4d::Ones();
  Eigen::Vector4d pose_mean = Eigen::Vector4d::Zero(), pose_std = Eigen::Vector4d::Ones();
  Eigen::Vector4d state_mean = Eigen::Vector4d::Zero(), state_std = Eigen::Vector4d::Ones();

  static constexpr double kStdFloor = 1e-6;

  static NormStats identity() { return {}; }

  nlohmann::json to_json() const {
    auto v = [](const Eigen::Vector4d& x) { return std::vector<double>{x[0], x[1], x[2], x[3]}; };
    return {{"action", {{"mean", v(action_mean)}, {"std", v(action_std)}}},
            {"pose", {{"mean", v(pose_mean)}, {"std", v(pose_std)}}},
            {"state", {{"mean", v(state_mean)}, {"std", v(state_std)}}}};
  }

  static NormStats from_json(const nlohmann::json& j) {
    auto v = [](const nlohmann::json& a) {
      const auto x = a.get<std::vector<double>>();
      if (x.size() != 4) throw Error("NormStats: expected 4 values");
      return Eigen::Vector4d(x[0], x[1], x[2], x[3]);
    };
    NormStats s;
    s.action_mean = v(j.at("action").at("mean"));
    s.action_std = v(j.at("action").at("std"));
    s.pose_mean = v(j.at("pose").at("mean"));
    s.pose_std = v(j.at("pose").at("std"));
    s.state_mean = v(j.at("state").at("mean"));
    s.state_std = v(j.at("state").at("std"));
    return s;
  }
};

/// Streaming per-dimension mean and population standard deviation.
class MomentAccumulator {
 public:
  void add(const Eigen::Vector4d& x) {
    ++n_;
    const Eigen::Vector4d d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d.cwiseProduct(x - mean_);
  }
  std::size_t count() const { return n_; }
  Eigen::Vector4d mean() const { return mean_; }
  Eigen::Vector4d stddev() const {
    if (n_ == 0) return Eigen::Vector4d::Constant(NormStats::kStdFloor);
    return (m2_ / static_cast<double>(n_)).cwiseSqrt().cwiseMax(NormStats::kStdFloor);
  }

 private:
  std::size_t n_ = 0;
  Eigen::Vector4d mean_ = Eigen::Vector4d::Zero();
  Eigen::Vector4d m2_ = Eigen::Vector4d::Zero();
};

inline NormStats compute_norm_stats(std::span<const FrameSample> samples) {
  if (samples.empty()) throw Error("compute_norm_stats: no samples");
  MomentAccumulator act, pose, state;
  for (const auto& s : samples) {
    for (int i = 0; i < s.chunk.k(); ++i) act.add(s.chunk.steps.row(i).transpose());
    pose.add(s.pose.as_vector());
    state.add(s.state);
  }
  NormStats n;
  n.action_mean = act.mean();
  n.action_std = act.stddev();
  n.pose_mean = pose.mean();
  n.pose_std = pose.stddev();
  n.state_mean = state.mean();
  n.state_std = state.stddev();
  return n;
}

/// Stats straight from records, without materializing frame stacks.
inline NormStats compute_norm_stats(std::span<const EpisodeRecord> episodes) {
  MomentAccumulator act, pose, state;
  for (const auto& e : episodes)
    for (const auto& v : e.vision) {
      for (int i = 0; i < v.chunk.rows(); ++i) act.add(v.chunk.row(i).transpose().cast<double>());
      pose.add(v.pose.cast<double>());
      state.add(v.state.cast<double>());
    }
  if (pose.count() == 0) throw Error("compute_norm_stats: no samples");
  NormStats n;
  n.action_mean = act.mean();
  n.action_std = act.stddev();
  n.pose_mean = pose.mean();
  n.pose_std = pose.stddev();
  n.state_mean = state.mean();
  n.state_std = state.stddev();
  return n;
}

// ---------------------------------------------------------------------------
// UTD1 episode files (little-endian)

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void vec4(const Vec4f& v) {
    for (int i = 0; i < 4; ++i) f32(v[i]);
  }
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string context) : data_(data), ctx_(std::move(context)) {}

  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw Error(ctx_ + ": unexpected end of file");
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  Vec4f vec4() {
    Vec4f v;
    for (int i = 0; i < 4; ++i) v[i] = f32();
    return v;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& context() const { return ctx_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string ctx_;
};

inline constexpr std::uint8_t kRandomSector = 255;

}  // namespace detail

/// Serialized UTD1 bytes for an episode.
///
/// Layout: "UTD1"; u32 episode_index, task_index, n_control, n_vision,
/// frame_width, frame_height, chunk_len, action_dim; config (i32 scenario,
/// u8 class, u8 tier, u8 sector or 255, u8 weather_noise, u64 seed, i32
/// horizon, control_hz, vision_hz, n_vehicles, n_pedestrians); weather as 9
/// f64; prompt as u32 length + UTF-8; n_control x 16 f32 (position, state,
/// action, pose); n_vision x (u32 control_tick, f32 timestamp, 4 f32 state,
/// 4 f32 pose, chunk_len*4 f32 chunk); n_vision raw frames of
/// frame_width*frame_height bytes.
inline std::vector<std::uint8_t> encode_episode(const EpisodeRecord& rec) {
  rec.validate();
  detail::ByteWriter w;
  w.bytes("UTD1", 4);
  w.u32(rec.episode_index);
  w.u32(rec.task_index);
  w.u32(static_cast<std::uint32_t>(rec.control.size()));
  w.u32(static_cast<std::uint32_t>(rec.vision.size()));
  w.u32(static_cast<std::uint32_t>(rec.frame_width));
  w.u32(static_cast<std::uint32_t>(rec.frame_height));
  w.u32(static_cast<std::uint32_t>(rec.chunk_len));
  w.u32(kActionDim);
  const auto& c = rec.config;
  w.i32(c.scenario_id);
  w.u8(static_cast<std::uint8_t>(c.target_class));
  w.u8(static_cast<std::uint8_t>(c.distance_tier));
  w.u8(c.sector ? static_cast<std::uint8_t>(*c.sector) : detail::kRandomSector);
  w.u8(c.weather_noise ? 1 : 0);
  w.u64(c.seed);
  w.i32(c.horizon);
  w.i32(c.control_hz);
  w.i32(c.vision_hz);
  w.i32(c.n_vehicles);
  w.i32(c.n_pedestrians);
  const auto& we = rec.weather;
  for (double v : {we.cloudiness, we.precipitation, we.deposits, we.wind, we.fog_density, we.fog_distance,
                   we.wetness, we.sun_azimuth, we.sun_altitude})
    w.f64(v);
  w.u32(static_cast<std::uint32_t>(rec.prompt.size()));
  w.bytes(rec.prompt.data(), rec.prompt.size());
  for (const auto& t : rec.control) {
    w.vec4(t.position);
    w.vec4(t.state);
    w.vec4(t.action);
    w.vec4(t.pose);
  }
  for (const auto& v : rec.vision) {
    w.u32(v.control_tick);
    w.f32(v.timestamp);
    w.vec4(v.state);
    w.vec4(v.pose);
    for (int i = 0; i < v.chunk.rows(); ++i)
      for (int j = 0; j < kActionDim; ++j) w.f32(v.chunk(i, j));
  }
  for (const auto& v : rec.vision) w.bytes(v.frame.pixels.data(), v.frame.pixels.size());
  return w.buffer();
}

inline EpisodeRecord decode_episode(std::span<const std::uint8_t> bytes, const std::string& context = "UTD") {
  detail::ByteReader r(bytes, context);
  char magic[4];
  if (bytes.size() < 4) throw Error(context + ": unexpected end of file");
  r.bytes(magic, 4);
  if (std::memcmp(magic, "UTD", 3) == 0 && magic[3] != '1')
    throw Error(context + ": unsupported UTD version '" + std::string(magic, 4) + "'");
  if (std::memcmp(magic, "UTD1", 4) != 0) throw Error(context + ": not a UTD file");
  EpisodeRecord rec;
  rec.episode_index = r.u32();
  rec.task_index = r.u32();
  const std::uint32_t n_control = r.u32();
  const std::uint32_t n_vision = r.u32();
  rec.frame_width = static_cast<int>(r.u32());
  rec.frame_height = static_cast<int>(r.u32());
  rec.chunk_len = static_cast<int>(r.u32());
  if (r.u32() != kActionDim) throw Error(context + ": unsupported action dimension");
  if (rec.frame_width < 0 || rec.frame_height < 0 || rec.chunk_len <= 0 || rec.chunk_len > 4096)
    throw Error(context + ": corrupt header");
  auto& c = rec.config;
  c.scenario_id = r.i32();
  c.target_class = static_cast<TargetClass>(r.u8());
  c.distance_tier = static_cast<DistanceTier>(r.u8());
  const std::uint8_t sector = r.u8();
  if (sector != detail::kRandomSector) c.sector = static_cast<Sector>(sector);
  c.weather_noise = r.u8() != 0;
  c.seed = r.u64();
  c.horizon = r.i32();
  c.control_hz = r.i32();
  c.vision_hz = r.i32();
  c.n_vehicles = r.i32();
  c.n_pedestrians = r.i32();
  auto& we = rec.weather;
  for (double* p : {&we.cloudiness, &we.precipitation, &we.deposits, &we.wind, &we.fog_density, &we.fog_distance,
                    &we.wetness, &we.sun_azimuth, &we.sun_altitude})
    *p = r.f64();
  const std::uint32_t plen = r.u32();
  r.need(plen);
  rec.prompt.resize(plen);
  r.bytes(rec.prompt.data(), plen);

  // Size check before allocating anything proportional to the counts.
  const std::size_t frame_bytes = static_cast<std::size_t>(rec.frame_width) * rec.frame_height;
  const std::size_t vision_bytes = 4 + 4 + 16 + 16 + static_cast<std::size_t>(rec.chunk_len) * kActionDim * 4;
  r.need(static_cast<std::size_t>(n_control) * 64 + static_cast<std::size_t>(n_vision) * (vision_bytes + frame_bytes));

  rec.control.resize(n_control);
  for (auto& t : rec.control) {
    t.position = r.vec4();
    t.state = r.vec4();
    t.action = r.vec4();
    t.pose = r.vec4();
  }
  rec.vision.resize(n_vision);
  for (auto& v : rec.vision) {
    v.control_tick = r.u32();
    v.timestamp = r.f32();
    v.state = r.vec4();
    v.pose = r.vec4();
    v.chunk = ChunkMatrixF(rec.chunk_len, kActionDim);
    for (int i = 0; i < rec.chunk_len; ++i)
      for (int j = 0; j < kActionDim; ++j) v.chunk(i, j) = r.f32();
  }
  for (auto& v : rec.vision) {
    v.frame = RasterFrame(rec.frame_width, rec.frame_height);
    r.bytes(v.frame.pixels.data(), frame_bytes);
  }
  if (r.remaining() != 0) throw Error(context + ": trailing bytes after episode");
  return rec;
}

inline void write_episode(const EpisodeRecord& rec, const std::filesystem::path& path) {
  const auto bytes = encode_episode(rec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline EpisodeRecord read_episode(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_episode(bytes, path.string());
}

// ---------------------------------------------------------------------------
// Dataset layout

inline std::string chunk_dir_name(std::size_t chunk) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "chunk-%03zu", chunk);
  return buf;
}

inline std::string episode_file_name(std::size_t episode) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "episode_%06zu.utd", episode);
  return buf;
}

inline std::filesystem::path episode_path(const std::filesystem::path& root, std::size_t episode,
                                          std::size_t chunk_size) {
  return root / "data" / chunk_dir_name(episode / chunk_size) / episode_file_name(episode);
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw Error("cannot open '" + p.string() + "' for writing");
  out << text;
  if (!out) throw Error("write failed for '" + p.string() + "'");
}

}  // namespace detail

/// Writes data/chunk-XXX/episode_XXXXXX.utd plus meta/{episodes.jsonl,
/// tasks.jsonl, info.json, episodes_stats.jsonl}. Episodes are stored under
/// their position in `episodes`.
inline void build_dataset_layout(std::span<const EpisodeRecord> episodes, const std::filesystem::path& out_dir,
                                 const std::vector<language::PromptSpec>& tasks, std::size_t chunk_size = 1000,
                                 bool force = false) {
  namespace fs = std::filesystem;
  if (episodes.empty()) throw Error("build_dataset_layout: no episodes");
  if (chunk_size == 0) throw Error("build_dataset_layout: chunk_size must be positive");
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!force) throw Error("output directory '" + out_dir.string() + "' is not empty (use --force)");
    fs::remove_all(out_dir / "data");
    fs::remove_all(out_dir / "meta");
  }
  fs::create_directories(out_dir / "meta");

  std::string episodes_jsonl, stats_jsonl;
  std::size_t total_frames = 0, total_ticks = 0;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    EpisodeRecord rec = episodes[i];
    rec.episode_index = static_cast<std::uint32_t>(i);
    const fs::path p = episode_path(out_dir, i, chunk_size);
    fs::create_directories(p.parent_path());
    write_episode(rec, p);
    total_frames += rec.vision.size();
    total_ticks += rec.control.size();
    episodes_jsonl += nlohmann::json{{"episode_index", i},
                                     {"tasks", {rec.prompt}},
                                     {"task_index", rec.task_index},
                                     {"length", rec.vision.size()},
                                     {"control_length", rec.control.size()}}
                          .dump() +
                      "\n";
    const NormStats es = compute_norm_stats(std::span<const EpisodeRecord>(&episodes[i], 1));
    stats_jsonl += nlohmann::json{{"episode_index", i}, {"stats", es.to_json()}}.dump() + "\n";
  }
  detail::write_text(out_dir / "meta" / "episodes.jsonl", episodes_jsonl);
  detail::write_text(out_dir / "meta" / "episodes_stats.jsonl", stats_jsonl);

  std::ostringstream tasks_os;
  language::write_task_table(tasks_os, tasks);
  detail::write_text(out_dir / "meta" / "tasks.jsonl", tasks_os.str());

  const auto& first = episodes.front();
  nlohmann::json info{
      {"codebase_version", "utd1"},
      {"total_episodes", episodes.size()},
      {"total_frames", total_frames},
      {"total_control_ticks", total_ticks},
      {"total_tasks", tasks.size()},
      {"chunks_size", chunk_size},
      {"total_chunks", (episodes.size() + chunk_size - 1) / chunk_size},
      {"fps", first.config.vision_hz},
      {"control_fps", first.config.control_hz},
      {"action_chunk", first.chunk_len},
      {"data_path", "data/chunk-{chunk:03d}/episode_{episode:06d}.utd"},
      {"features",
       {{"observation.images", {{"dtype", "uint8"}, {"shape", {kStackSize, first.frame_height, first.frame_width}}}},
        {"observation.state", {{"dtype", "float32"}, {"shape", {4}}}},
        {"action", {{"dtype", "float32"}, {"shape", {first.chunk_len, kActionDim}}}},
        {"position", {{"dtype", "float32"}, {"shape", {4}}}},
        {"pose_target", {{"dtype", "float32"}, {"shape", {4}}}},
        {"timestamp", {{"dtype", "float32"}, {"shape", {1}}}},
        {"frame_index", {{"dtype", "uint32"}, {"shape", {1}}}},
        {"episode_index", {{"dtype", "uint32"}, {"shape", {1}}}},
        {"task_index", {{"dtype", "uint32"}, {"shape", {1}}}}}},
      {"norm_stats", compute_norm_stats(episodes).to_json()},
  };
  detail::write_text(out_dir / "meta" / "info.json", info.dump(2) + "\n");
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open '" + p.string() + "'");
  std::vector<nlohmann::json> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(p.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open '" + p.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(p.string() + ": " + e.what());
  }
}

/// Loads every episode listed in meta/episodes.jsonl.
inline std::vector<EpisodeRecord> load_dataset(const std::filesystem::path& root) {
  const auto info = read_json(root / "meta" / "info.json");
  const auto chunk_size = info.at("chunks_size").get<std::size_t>();
  std::vector<EpisodeRecord> out;
  for (const auto& e : read_jsonl(root / "meta" / "episodes.jsonl")) {
    const auto idx = e.at("episode_index").get<std::size_t>();
    out.push_back(read_episode(episode_path(root, idx, chunk_size)));
  }
  return out;
}

}  // namespace uavtrack::data
