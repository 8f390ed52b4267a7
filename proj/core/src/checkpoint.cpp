// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "e2est/errors.hpp"

namespace e2est {

namespace {

constexpr char kMagic[8] = {'E', '2', 'S', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kMaxRank = 8;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u64(d);
    for (double v : t.data()) f64(v);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::pair<std::string, Tensor> tensor() {
    std::string name = str();
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > kMaxRank) throw CheckpointError("bad rank for " + name);
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = u64();
      if (d == 0) throw CheckpointError("zero extent for " + name);
      if (d > (in_.size() - pos_) / 8 || numel > (in_.size() - pos_) / 8 / d) {
        throw CheckpointError("shape of " + name + " exceeds the file size");
      }
      numel *= d;
    }
    need(numel * 8);
    std::vector<double> data(numel);
    for (auto& v : data) v = f64();
    return {std::move(name), Tensor(std::move(shape), std::move(data))};
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

void write_moments(Writer& w, const std::map<std::string, Tensor>& m) {
  w.u64(m.size());
  for (const auto& [name, t] : m) w.tensor(name, t);
}

std::map<std::string, Tensor> read_moments(Reader& r) {
  std::map<std::string, Tensor> m;
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    auto [name, t] = r.tensor();
    m.emplace(std::move(name), std::move(t));
  }
  return m;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(std::string_view(kMagic, sizeof kMagic));
  w.u32(ckpt.version);
  w.u64(ckpt.step);
  w.str(serialize_graph(ckpt.graph));
  w.str(ckpt.run_config);
  w.u64(ckpt.params.rng_seed());
  w.u64(ckpt.params.size());
  for (const auto& [name, t] : ckpt.params) w.tensor(name, t);
  w.u8(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    const auto& o = *ckpt.optimizer;
    w.u64(o.step);
    w.f64(o.learning_rate);
    w.f64(o.adam.beta1);
    w.f64(o.adam.beta2);
    w.f64(o.adam.epsilon);
    write_moments(w, o.first_moment);
    write_moments(w, o.second_moment);
  }
  w.u64(ckpt.dev_history.size());
  for (double v : ckpt.dev_history) w.f64(v);
  w.u32(crc_of(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 4) throw CheckpointError("checkpoint truncated");
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  Reader trailer(bytes.substr(bytes.size() - 4));
  Reader r(body);
  if (r.raw(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) throw CheckpointError("not a checkpoint");
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(c.version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  if (trailer.u32() != crc_of(body)) throw CheckpointError("checkpoint checksum mismatch");
  c.step = r.u64();
  try {
    c.graph = deserialize_graph(r.str());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("bad graph description: ") + e.what());
  }
  c.run_config = r.str();
  c.params = ParamStore(r.u64());
  const std::uint64_t n = r.u64();
  const auto prefixes = c.graph.prefixes();
  const std::set<std::string_view> known(prefixes.begin(), prefixes.end());
  for (std::uint64_t i = 0; i < n; ++i) {
    auto [name, t] = r.tensor();
    if (!known.count(component_of(name))) throw CheckpointError("unknown component in parameter name " + name);
    try {
      c.params.add(std::move(name), std::move(t));
    } catch (const ShapeError& e) {
      throw CheckpointError(e.what());
    }
  }
  try {
    check_store(c.graph, c.params);
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("parameters do not match the graph: ") + e.what());
  }
  const std::uint8_t has_opt = r.u8();
  if (has_opt > 1) throw CheckpointError("bad optimizer flag");
  if (has_opt) {
    OptimizerState o;
    o.step = r.u64();
    o.learning_rate = r.f64();
    o.adam.beta1 = r.f64();
    o.adam.beta2 = r.f64();
    o.adam.epsilon = r.f64();
    o.first_moment = read_moments(r);
    o.second_moment = read_moments(r);
    c.optimizer = std::move(o);
  }
  const std::uint64_t h = r.u64();
  for (std::uint64_t i = 0; i < h; ++i) c.dev_history.push_back(r.f64());
  if (!r.at_end()) throw CheckpointError("trailing bytes in checkpoint");
  return c;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    os.flush();
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, std::uint64_t step) {
  return run_dir / ("ckpt-" + std::to_string(step));
}

void write_best_marker(const std::filesystem::path& run_dir, std::uint64_t step) {
  write_file_atomic(run_dir / "best", "ckpt-" + std::to_string(step) + "\n");
}

std::filesystem::path best_checkpoint(const std::filesystem::path& run_dir) {
  std::string name = read_file(run_dir / "best");
  while (!name.empty() && (name.back() == '\n' || name.back() == '\r')) name.pop_back();
  if (name.empty()) throw IoError("empty best marker in " + run_dir.string());
  return run_dir / name;
}

}  // namespace e2est
