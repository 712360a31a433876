#include "attnwarp/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "attnwarp/error.hpp"

namespace attnwarp {

namespace {

std::uint64_t dims_product(const std::vector<std::uint32_t>& dims) {
  std::uint64_t n = 1;
  for (std::uint32_t d : dims) {
    n *= d;
    if (n > std::numeric_limits<std::uint32_t>::max())
      fail(ErrorKind::Size, "tensor element count overflows 32 bits");
  }
  return n;
}

void check_dims(const std::vector<std::uint32_t>& dims) {
  require(!dims.empty() && dims.size() <= 3, ErrorKind::Size, "tensor must have 1 to 3 dims");
  dims_product(dims);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void read_exact(std::istream& in, void* dst, std::size_t n, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    fail(ErrorKind::Truncated, std::string("tensor stream ends inside the ") + what);
}

int dim_as_int(std::uint32_t d) {
  require(d <= static_cast<std::uint32_t>(std::numeric_limits<int>::max()), ErrorKind::Size,
          "tensor dimension too large");
  return static_cast<int>(d);
}

}  // namespace

Tensor::Tensor(std::vector<std::uint32_t> d, std::vector<float> values)
    : dims(std::move(d)), data(std::move(values)) {
  check_dims(dims);
  require(data.size() == dims_product(dims), ErrorKind::Size,
          "tensor payload does not match its dims");
}

std::size_t Tensor::element_count() const { return static_cast<std::size_t>(dims_product(dims)); }

Tensor read_tensor(std::istream& in) {
  char magic[4];
  read_exact(in, magic, 4, "magic");
  if (std::memcmp(magic, kTensorMagic, 4) != 0) fail(ErrorKind::BadMagic, "not an FWT1 tensor");

  unsigned char ndim = 0;
  read_exact(in, &ndim, 1, "header");
  require(ndim >= 1 && ndim <= 3, ErrorKind::Size, "tensor must have 1 to 3 dims");

  Tensor t;
  t.dims.resize(ndim);
  for (auto& d : t.dims) {
    unsigned char b[4];
    read_exact(in, b, 4, "header");
    d = get_u32(b);
  }
  unsigned char dtype = 0;
  read_exact(in, &dtype, 1, "header");
  if (dtype != kDtypeFloat32) fail(ErrorKind::UnsupportedDtype, "unsupported tensor dtype tag");

  const std::uint64_t n = dims_product(t.dims);
  // Chunked so a corrupt header cannot force a huge allocation up front.
  constexpr std::uint64_t kChunk = 1 << 16;
  std::vector<unsigned char> raw(4 * kChunk);
  t.data.reserve(static_cast<std::size_t>(std::min(n, kChunk)));
  for (std::uint64_t done = 0; done < n;) {
    const std::uint64_t count = std::min(kChunk, n - done);
    read_exact(in, raw.data(), static_cast<std::size_t>(4 * count), "payload");
    for (std::uint64_t i = 0; i < count; ++i) t.data.push_back(std::bit_cast<float>(get_u32(raw.data() + 4 * i)));
    done += count;
  }
  return t;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  check_dims(t.dims);
  require(t.data.size() == dims_product(t.dims), ErrorKind::Size,
          "tensor payload does not match its dims");
  out.write(kTensorMagic, 4);
  out.put(static_cast<char>(t.dims.size()));
  for (std::uint32_t d : t.dims) put_u32(out, d);
  out.put(static_cast<char>(kDtypeFloat32));
  for (float x : t.data) put_u32(out, std::bit_cast<std::uint32_t>(x));
  require(static_cast<bool>(out), ErrorKind::Io, "tensor write failed");
}

Tensor decode_tensor(const std::string& bytes) {
  std::istringstream in(bytes);
  return read_tensor(in);
}

std::string encode_tensor(const Tensor& t) {
  std::ostringstream out;
  write_tensor(out, t);
  return out.str();
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open tensor file " + path.string());
  return read_tensor(in);
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write tensor file " + path.string());
  write_tensor(out, t);
}

Tensor to_tensor(const DepthMap& d) {
  return Tensor({static_cast<std::uint32_t>(d.height), static_cast<std::uint32_t>(d.width)}, d.data);
}

Tensor to_tensor(const Mask& m) {
  return Tensor({static_cast<std::uint32_t>(m.height), static_cast<std::uint32_t>(m.width)}, m.data);
}

Tensor to_tensor(const FeatureMap& f) {
  return Tensor({static_cast<std::uint32_t>(f.channels), static_cast<std::uint32_t>(f.height),
                 static_cast<std::uint32_t>(f.width)},
                f.data);
}

DepthMap depth_from_tensor(const Tensor& t) {
  require(t.dims.size() == 2, ErrorKind::DimensionMismatch, "depth map tensor must be [H,W]");
  DepthMap d;
  d.height = dim_as_int(t.dims[0]);
  d.width = dim_as_int(t.dims[1]);
  d.data = t.data;
  d.validate();
  return d;
}

Mask mask_from_tensor(const Tensor& t) {
  require(t.dims.size() == 2, ErrorKind::DimensionMismatch, "mask tensor must be [H,W]");
  Mask m;
  m.height = dim_as_int(t.dims[0]);
  m.width = dim_as_int(t.dims[1]);
  m.data = t.data;
  m.validate();
  return m;
}

FeatureMap feature_from_tensor(const Tensor& t) {
  require(t.dims.size() == 2 || t.dims.size() == 3, ErrorKind::DimensionMismatch,
          "feature tensor must be [C,H,W] or [H,W]");
  FeatureMap f;
  if (t.dims.size() == 2) {
    f.channels = 1;
    f.height = dim_as_int(t.dims[0]);
    f.width = dim_as_int(t.dims[1]);
  } else {
    f.channels = dim_as_int(t.dims[0]);
    f.height = dim_as_int(t.dims[1]);
    f.width = dim_as_int(t.dims[2]);
  }
  f.data = t.data;
  return f;
}

}  // namespace attnwarp
