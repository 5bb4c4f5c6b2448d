#pragma once

// UTCK checkpoint files.
//
// Layout (little-endian): "UTCK"; u32 version (1); u32 json length + JSON
// blob {model, train, norm_stats, vocab, step}; u32 tensor count; per tensor:
// u32 name length + name, u32 rows, u32 cols, rows*cols f32 (row-major)
// for the trained weights; then the same tensor list again for the EMA copy.

#include <filesystem>
#include <fstream>

#include "uavtrack/data.hpp"
#include "uavtrack/language.hpp"
#include "uavtrack/model/train.hpp"

namespace uavtrack::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  data::NormStats norm;
  language::Vocab vocab;
  int step = 0;
  Params<float> params;
  Params<float> ema;
};

namespace detail {

inline void write_tensors(data::detail::ByteWriter& w, const Params<float>& p) {
  w.u32(static_cast<std::uint32_t>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    w.u32(static_cast<std::uint32_t>(p.names[i].size()));
    w.bytes(p.names[i].data(), p.names[i].size());
    w.u32(static_cast<std::uint32_t>(p[i].rows()));
    w.u32(static_cast<std::uint32_t>(p[i].cols()));
    for (Eigen::Index k = 0; k < p[i].size(); ++k) w.f32(p[i].data()[k]);
  }
}

inline Params<float> read_tensors(data::detail::ByteReader& r, const Layout& layout) {
  const std::uint32_t n = r.u32();
  if (n != layout.entries.size())
    throw Error(r.context() + ": checkpoint has " + std::to_string(n) + " tensors, config expects " +
                std::to_string(layout.entries.size()));
  Params<float> p = Params<float>::zeros(layout);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name(r.u32(), '\0');
    r.bytes(name.data(), name.size());
    const auto rows = static_cast<Eigen::Index>(r.u32()), cols = static_cast<Eigen::Index>(r.u32());
    const auto& e = layout.entries[i];
    if (name != e.name || rows != e.rows || cols != e.cols)
      throw Error(r.context() + ": tensor '" + name + "' does not match config (expected '" + e.name + "' " +
                  std::to_string(e.rows) + "x" + std::to_string(e.cols) + ")");
    for (Eigen::Index k = 0; k < rows * cols; ++k) p[i].data()[k] = r.f32();
  }
  return p;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  data::detail::ByteWriter w;
  w.bytes("UTCK", 4);
  w.u32(kCheckpointVersion);
  const nlohmann::json meta = {{"model", c.model},
                               {"train", c.train},
                               {"norm_stats", c.norm.to_json()},
                               {"vocab", c.vocab.words()},
                               {"step", c.step}};
  const std::string blob = meta.dump();
  w.u32(static_cast<std::uint32_t>(blob.size()));
  w.bytes(blob.data(), blob.size());
  detail::write_tensors(w, c.params);
  detail::write_tensors(w, c.ema);
  return w.buffer();
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& context = "UTCK") {
  data::detail::ByteReader r(bytes, context);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "UTCK") throw Error(context + ": not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw Error(context + ": unsupported checkpoint version " + std::to_string(version));
  std::string blob(r.u32(), '\0');
  r.bytes(blob.data(), blob.size());
  Checkpoint c;
  try {
    const auto meta = nlohmann::json::parse(blob);
    c.model = meta.at("model").get<ModelConfig>();
    c.train = meta.at("train").get<TrainConfig>();
    c.norm = data::NormStats::from_json(meta.at("norm_stats"));
    c.vocab = language::Vocab::from_words(meta.at("vocab").get<std::vector<std::string>>());
    c.step = meta.at("step").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(context + ": bad metadata: " + e.what());
  }
  c.model.validate();
  const Layout layout(c.model);
  c.params = detail::read_tensors(r, layout);
  c.ema = detail::read_tensors(r, layout);
  if (r.remaining() != 0) throw Error(context + ": trailing bytes");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

}  // namespace uavtrack::model
