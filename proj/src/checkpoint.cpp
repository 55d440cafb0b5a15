#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rqen/checkpoint.hpp"
#include "rqen/errors.hpp"

namespace rqen {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void magic() {
    need(sizeof kCheckpointMagic);
    if (std::memcmp(in_.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
      throw DataError("not a checkpoint file (bad magic)");
    }
    pos_ += sizeof kCheckpointMagic;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DataError("truncated checkpoint");
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::size_t as_size(std::uint64_t v) {
  if (v > (1ull << 40)) throw DataError("implausible size in checkpoint");
  return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);

  const auto names = ckpt.params.names();
  w.u32(static_cast<std::uint32_t>(names.size()));
  for (const auto& name : names) {
    const Tensor& t = ckpt.params.value(name);
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.u64(e);
    for (double v : t.data()) w.f64(v);
  }

  const BackboneConfig& bb = ckpt.config.backbone;
  w.u64(bb.input_channels);
  w.u64(bb.input_height);
  w.u64(bb.input_width);
  w.u32(static_cast<std::uint32_t>(bb.stages()));
  for (std::size_t s = 0; s < bb.stages(); ++s) {
    w.u64(bb.channels[s]);
    w.u64(bb.pool[s]);
  }
  w.u64(bb.kernel);
  w.u64(bb.early_tap);
  w.u64(bb.late_tap);

  w.u64(ckpt.config.quality_hidden);
  w.u64(ckpt.config.num_classes);
  w.u8(ckpt.config.l2_normalize ? 1 : 0);
  std::uint8_t mask = 0;
  for (Region r : ckpt.config.regions.regions()) mask |= static_cast<std::uint8_t>(1u << index_of(r));
  w.u8(mask);
  w.u8(ckpt.config.quality_fixed ? 1 : 0);

  w.f64(ckpt.layout.upper_end);
  w.f64(ckpt.layout.middle_end);

  w.u8(ckpt.split ? 1 : 0);
  if (ckpt.split) {
    w.u8(static_cast<std::uint8_t>(ckpt.split->protocol));
    w.u64(ckpt.split->seed);
    w.u32(static_cast<std::uint32_t>(ckpt.split->test_cameras.size()));
    for (int c : ckpt.split->test_cameras) w.i64(c);
    w.i64(ckpt.split->probe_camera);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.magic();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw DataError("bad rank for parameter '" + name + "'");
    Shape shape(rank);
    for (auto& e : shape) e = as_size(r.u64());
    std::vector<double> vals(as_size(shape_size(shape)));
    for (double& v : vals) v = r.f64();
    ckpt.params.add(name, Tensor(std::move(shape), std::move(vals)));
  }

  BackboneConfig& bb = ckpt.config.backbone;
  bb.input_channels = as_size(r.u64());
  bb.input_height = as_size(r.u64());
  bb.input_width = as_size(r.u64());
  const std::uint32_t stages = r.u32();
  bb.channels.assign(stages, 0);
  bb.pool.assign(stages, 0);
  for (std::uint32_t s = 0; s < stages; ++s) {
    bb.channels[s] = as_size(r.u64());
    bb.pool[s] = as_size(r.u64());
  }
  bb.kernel = as_size(r.u64());
  bb.early_tap = as_size(r.u64());
  bb.late_tap = as_size(r.u64());

  ckpt.config.quality_hidden = as_size(r.u64());
  ckpt.config.num_classes = as_size(r.u64());
  ckpt.config.l2_normalize = r.u8() != 0;
  const std::uint8_t mask = r.u8();
  std::string codes;
  for (Region reg : kAllRegions)
    if (mask & (1u << index_of(reg))) codes += region_code(reg);
  if (codes.empty()) throw DataError("checkpoint has an empty region mask");
  ckpt.config.regions = RegionMask::parse(codes);
  ckpt.config.quality_fixed = r.u8() != 0;

  ckpt.layout.upper_end = r.f64();
  ckpt.layout.middle_end = r.f64();

  if (r.u8() != 0) {
    TrainingSplit split;
    const std::uint8_t p = r.u8();
    if (p > 1) throw DataError("unknown protocol code in checkpoint");
    split.protocol = static_cast<Protocol>(p);
    split.seed = r.u64();
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) split.test_cameras.push_back(static_cast<int>(r.i64()));
    split.probe_camera = static_cast<int>(r.i64());
    ckpt.split = split;
  }
  if (!r.done()) throw DataError("trailing bytes after checkpoint");

  try {
    ckpt.config.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint holds an invalid model config: ") + e.what());
  }
  if (!ckpt.layout.valid()) throw DataError("checkpoint holds an invalid region layout");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("error writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace rqen
