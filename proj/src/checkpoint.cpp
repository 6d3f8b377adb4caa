#include "fpci/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "fpci/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace fpci::ckpt {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'C', 'I'};

void put_u32(std::vector<unsigned char>& buf, uint32_t v) {
  const size_t n = buf.size();
  buf.resize(n + 4);
  std::memcpy(buf.data() + n, &v, 4);
}

void put_bytes(std::vector<unsigned char>& buf, const void* p, size_t len) {
  const size_t n = buf.size();
  buf.resize(n + len);
  std::memcpy(buf.data() + n, p, len);
}

uint32_t crc_of(const unsigned char* p, size_t len) {
  return static_cast<uint32_t>(::crc32(0L, p, static_cast<uInt>(len)));
}

// Cursor with offset-aware failure messages.
struct Reader {
  const std::vector<unsigned char>& buf;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (pos + n > buf.size())
      throw FormatError(std::string("checkpoint: truncated reading ") + what + " at byte " +
                        std::to_string(pos));
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  void bytes(void* out, size_t n, const char* what) {
    need(n, what);
    std::memcpy(out, buf.data() + pos, n);
    pos += n;
  }
};

}  // namespace

void save(const std::string& path, const std::vector<TensorRecord>& tensors) {
  std::vector<unsigned char> buf;
  put_bytes(buf, kMagic, 4);
  put_u32(buf, kFormatVersion);
  put_u32(buf, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(buf, static_cast<uint32_t>(t.name.size()));
    put_bytes(buf, t.name.data(), t.name.size());
    put_u32(buf, static_cast<uint32_t>(t.dims.size()));
    uint64_t numel = 1;
    for (uint32_t d : t.dims) {
      put_u32(buf, d);
      numel *= d;
    }
    if (numel != t.data.size())
      throw ArgumentError("checkpoint: tensor '" + t.name + "' dims disagree with data size");
    put_bytes(buf, t.data.data(), t.data.size() * sizeof(float));
  }
  put_u32(buf, crc_of(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("checkpoint: write failed: " + path);
}

std::vector<TensorRecord> load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("checkpoint: read failed: " + path);
  if (buf.size() < 16) throw FormatError("checkpoint: file too short: " + path);

  uint32_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  if (stored != crc_of(buf.data(), buf.size() - 4))
    throw FormatError("checkpoint: CRC mismatch in " + path);

  Reader r{buf};
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  const uint32_t version = r.u32("version");
  if (version != kFormatVersion)
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version));

  const uint32_t count = r.u32("tensor count");
  std::vector<TensorRecord> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    TensorRecord rec;
    const uint32_t name_len = r.u32("name length");
    rec.name.resize(name_len);
    r.bytes(rec.name.data(), name_len, "name");
    const uint32_t ndims = r.u32("rank");
    uint64_t numel = 1;
    for (uint32_t d = 0; d < ndims; ++d) {
      rec.dims.push_back(r.u32("dims"));
      numel *= rec.dims.back();
    }
    rec.data.resize(numel);
    r.bytes(rec.data.data(), numel * sizeof(float), "tensor data");
    out.push_back(std::move(rec));
  }
  if (r.pos != buf.size() - 4)
    throw FormatError("checkpoint: trailing bytes at offset " + std::to_string(r.pos));
  return out;
}

}  // namespace fpci::ckpt
