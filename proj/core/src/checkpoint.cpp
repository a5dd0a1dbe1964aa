#include "ecn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "ecn/errors.hpp"

namespace ecn {
namespace {

constexpr char kMagic[4] = {'E', 'C', 'N', 'K'};

class Writer {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor<float>& t) {
    str(name);
    data(t);
  }
  void data(const Tensor<float>& t) {
    const Shape4& s = t.shape();
    for (std::size_t d : {s.n, s.c, s.h, s.w}) u32(static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.numel(); ++i) f32(t[i]);
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
    pos_ += len;
    return s;
  }
  Tensor<float> data() {
    Shape4 s{u32(), u32(), u32(), u32()};
    if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0) throw FormatError("checkpoint: zero tensor dimension");
    need(s.numel() * 4);
    Tensor<float> t(s);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = f32();
    return t;
  }
  bool done() const { return pos_ == n_; }

 private:
  void need(std::size_t k) const {
    if (n_ - pos_ < k) throw FormatError("checkpoint: unexpected end of data");
  }
  std::uint64_t get(int k) {
    need(static_cast<std::size_t>(k));
    std::uint64_t v = 0;
    for (int i = 0; i < k; ++i) v |= static_cast<std::uint64_t>(p_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(k);
    return v;
  }
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, p, static_cast<uInt>(n)));
}

void read_into(Reader& r, Tensor<float>& dst, const std::string& expected_name, const char* what) {
  const std::string name = r.str();
  if (name != expected_name) {
    throw SpecMismatchError(std::string("checkpoint: ") + what + " '" + name + "' where the spec expects '" +
                            expected_name + "'");
  }
  Tensor<float> t = r.data();
  if (!(t.shape() == dst.shape())) {
    throw SpecMismatchError(std::string("checkpoint: ") + what + " '" + name + "' has shape " + t.shape().str() +
                            ", spec expects " + dst.shape().str());
  }
  dst = std::move(t);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model<float>& model, const OptimState<float>& optim,
                                               const TrainProgress& progress) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u16(kCheckpointVersion);
  w.str(to_text(model.spec()));
  w.u64(model.seed());
  w.u64(progress.epoch);
  w.u64(progress.step);
  w.f64(progress.best_metric);
  w.str(progress.rng_state);
  w.u32(static_cast<std::uint32_t>(model.params().size()));
  for (const auto& e : model.params()) w.tensor(e.name, e.value);
  w.u32(static_cast<std::uint32_t>(model.buffers().size()));
  for (const auto& e : model.buffers()) w.tensor(e.name, e.value);
  w.f64(optim.config.lr);
  w.f64(optim.config.beta1);
  w.f64(optim.config.beta2);
  w.f64(optim.config.eps);
  w.u64(optim.step);
  w.u32(static_cast<std::uint32_t>(optim.m.size()));
  for (std::size_t i = 0; i < optim.m.size(); ++i) {
    w.data(optim.m[i]);
    w.data(optim.v[i]);
  }
  std::vector<std::uint8_t>& out = w.buffer();
  const std::uint32_t crc = crc_of(out.data(), out.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const ArchSpec* expected) {
  if (bytes.size() < 10) throw ChecksumError("checkpoint: file too short to hold a checksum");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic bytes");
  if (crc_of(bytes.data(), body) != stored) throw ChecksumError("checkpoint: checksum mismatch (corrupt or truncated)");

  Reader r(bytes.data() + 4, body - 4);
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  ArchSpec spec = parse_arch_spec(r.str());
  if (expected != nullptr && spec_hash(*expected) != spec_hash(spec)) {
    throw SpecMismatchError("checkpoint: embedded spec differs from the requested spec (hash " +
                            std::to_string(spec_hash(spec)) + " vs " + std::to_string(spec_hash(*expected)) + ")");
  }
  const std::uint64_t seed = r.u64();
  Checkpoint ck{Model<float>(std::move(spec), seed), {}, {}};
  ck.progress.epoch = r.u64();
  ck.progress.step = r.u64();
  ck.progress.best_metric = r.f64();
  ck.progress.rng_state = r.str();

  auto& params = ck.model.params();
  if (r.u32() != params.size()) throw SpecMismatchError("checkpoint: parameter count differs from the spec");
  for (auto& e : params) read_into(r, e.value, e.name, "parameter");
  auto& buffers = ck.model.buffers();
  if (r.u32() != buffers.size()) throw SpecMismatchError("checkpoint: buffer count differs from the spec");
  for (auto& e : buffers) read_into(r, e.value, e.name, "buffer");

  ck.optim = OptimState<float>::init(params);
  ck.optim.config.lr = r.f64();
  ck.optim.config.beta1 = r.f64();
  ck.optim.config.beta2 = r.f64();
  ck.optim.config.eps = r.f64();
  ck.optim.step = r.u64();
  const std::uint32_t moments = r.u32();
  if (moments != 0 && moments != params.size()) throw SpecMismatchError("checkpoint: optimizer state size mismatch");
  for (std::size_t i = 0; i < moments; ++i) {
    Tensor<float> m = r.data();
    Tensor<float> v = r.data();
    if (!(m.shape() == params[i].value.shape()) || !(v.shape() == params[i].value.shape())) {
      throw SpecMismatchError("checkpoint: optimizer moment shape mismatch for " + params[i].name);
    }
    ck.optim.m[i] = std::move(m);
    ck.optim.v[i] = std::move(v);
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes before checksum");
  return ck;
}

void save_checkpoint(const std::string& path, const Model<float>& model, const OptimState<float>& optim,
                     const TrainProgress& progress) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(model, optim, progress);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path, "write failed");
}

Checkpoint load_checkpoint(const std::string& path, const ArchSpec* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open checkpoint");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, expected);
}

}  // namespace ecn
