#include "advp/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace advp::harness {

void Checkpoint::put(const std::string& name, const NArray& value) {
  if (value.rank() > 255) throw CheckpointError("record '" + name + "': rank exceeds 255");
  if (has(name)) throw CheckpointError("duplicate record '" + name + "'");
  records_.push_back({name, value.shape(), {value.values().begin(), value.values().end()}});
}

void Checkpoint::put_words(const std::string& name, const std::vector<std::uint32_t>& words) {
  std::vector<double> halves;
  halves.reserve(2 * words.size());
  for (std::uint32_t w : words) {
    halves.push_back(static_cast<double>(w >> 16));
    halves.push_back(static_cast<double>(w & 0xffffu));
  }
  const std::size_t n = halves.size();
  put(name, NArray(Shape{n}, std::move(halves)));
}

void Checkpoint::put_u64(const std::string& name, std::uint64_t v) {
  put_words(name, {static_cast<std::uint32_t>(v >> 32), static_cast<std::uint32_t>(v)});
}

void Checkpoint::put_text(const std::string& name, const std::string& text) {
  std::vector<double> bytes;
  for (unsigned char c : text) bytes.push_back(static_cast<double>(c));
  const std::size_t n = bytes.size();
  put(name, NArray(Shape{n}, std::move(bytes)));
}

bool Checkpoint::has(const std::string& name) const {
  for (const Record& r : records_)
    if (r.name == name) return true;
  return false;
}

const Record& Checkpoint::get(const std::string& name) const {
  for (const Record& r : records_)
    if (r.name == name) return r;
  throw CheckpointError("checkpoint has no record '" + name + "'");
}

NArray Checkpoint::get_array(const std::string& name) const {
  const Record& r = get(name);
  return NArray(r.dims, r.values);
}

std::vector<std::uint32_t> Checkpoint::get_words(const std::string& name) const {
  const Record& r = get(name);
  if (r.values.size() % 2 != 0) throw CheckpointError("record '" + name + "' is not word data");
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < r.values.size(); i += 2) {
    const double hi = r.values[i], lo = r.values[i + 1];
    if (!(hi >= 0 && hi < 65536 && lo >= 0 && lo < 65536) || hi != static_cast<std::uint32_t>(hi) ||
        lo != static_cast<std::uint32_t>(lo))
      throw CheckpointError("record '" + name + "' holds a malformed word");
    out.push_back((static_cast<std::uint32_t>(hi) << 16) | static_cast<std::uint32_t>(lo));
  }
  return out;
}

std::uint64_t Checkpoint::get_u64(const std::string& name) const {
  const auto w = get_words(name);
  if (w.size() != 2) throw CheckpointError("record '" + name + "' is not a 64-bit value");
  return (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
}

std::string Checkpoint::get_text(const std::string& name) const {
  std::string out;
  for (double v : get(name).values) {
    if (!(v >= 0 && v < 256)) throw CheckpointError("record '" + name + "' is not text");
    out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'A', 'D', 'V', 'P'};

template <class T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::uint32_t version) : b_(bytes), version_(version) {}

  template <class T>
  T le(const char* what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) fail(std::string("truncated while reading ") + what);
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw CheckpointError("checkpoint (format version " + std::to_string(version_) + "): " + msg +
                          " at byte offset " + std::to_string(pos_));
  }
  void set_version(std::uint32_t v) { version_ = v; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
  std::uint32_t version_;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.version != 1 && ckpt.version != 2)
    throw CheckpointError("cannot write checkpoint format version " +
                          std::to_string(ckpt.version));
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, ckpt.version);
  put_le<std::uint64_t>(out, ckpt.config_hash);
  put_le<std::uint64_t>(out, ckpt.records().size());
  for (const Record& r : ckpt.records()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(r.dims.size()));
    for (std::size_t d : r.dims) put_le<std::uint64_t>(out, d);
    for (double v : r.values) {
      if (ckpt.version == 1)
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader in(bytes, 0);
  if (in.bytes(4, "magic") != std::string(kMagic, 4)) in.fail("bad magic (not an ADVP checkpoint)");
  Checkpoint ckpt;
  ckpt.version = in.le<std::uint32_t>("version");
  in.set_version(ckpt.version);
  if (ckpt.version != 1 && ckpt.version != 2)
    in.fail("unsupported version; this build reads versions 1 and 2");
  ckpt.config_hash = in.le<std::uint64_t>("config hash");
  const auto count = in.le<std::uint64_t>("record count");
  const std::size_t width = ckpt.version == 1 ? 4 : 8;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = in.le<std::uint32_t>("record name length");
    const std::string name = in.bytes(len, "record name");
    const auto rank = in.le<std::uint8_t>("record rank");
    Shape dims;
    std::uint64_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      dims.push_back(static_cast<std::size_t>(in.le<std::uint64_t>("record dims")));
      if (dims.back() != 0 && n > in.remaining() / dims.back())
        in.fail("record '" + name + "' declares more data than the file holds");
      n *= dims.back();
    }
    if (n > in.remaining() / width) in.fail("record '" + name + "' is truncated");
    std::vector<double> values(n);
    for (auto& v : values) {
      if (width == 4)
        v = std::bit_cast<float>(in.le<std::uint32_t>("payload"));
      else
        v = std::bit_cast<double>(in.le<std::uint64_t>("payload"));
    }
    try {
      ckpt.put(name, NArray(dims, std::move(values)));
    } catch (const std::exception& e) {
      in.fail(e.what());
    }
  }
  if (in.remaining() != 0) in.fail("trailing bytes after the last record");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed on '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

}  // namespace advp::harness
