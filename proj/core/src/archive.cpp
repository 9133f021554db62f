#include "rspde/archive.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace rspde {

namespace {

constexpr char kMagic[5] = {'R', 'S', 'P', 'D', '1'};

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(buf, bits);
}

struct Reader {
  const unsigned char* p;
  const unsigned char* end;
  std::uint32_t u32() {
    if (end - p < 4) throw std::runtime_error("archive: truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  std::uint64_t u64() {
    if (end - p < 8) throw std::runtime_error("archive: truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    p += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

struct Header {
  std::uint32_t n, K, channels, steps, M, flags;
  double horizon;
};

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("archive: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("archive: cannot write " + path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("archive: write failed for " + path);
}

std::string header_bytes(const Header& h) {
  std::string buf;
  buf.append(kMagic, 5);
  put_u32(buf, kArchiveVersion);
  put_u32(buf, h.n);
  put_u32(buf, h.K);
  put_u32(buf, h.channels);
  put_u32(buf, h.steps);
  put_u32(buf, h.M);
  put_u32(buf, h.flags);
  put_f64(buf, h.horizon);
  return buf;
}

Header parse_header(Reader& r) {
  if (r.end - r.p < 5 || std::memcmp(r.p, kMagic, 5) != 0)
    throw std::runtime_error("archive: bad magic");
  r.p += 5;
  if (r.u32() != kArchiveVersion)
    throw std::runtime_error("archive: unsupported version");
  Header h;
  h.n = r.u32();
  h.K = r.u32();
  h.channels = r.u32();
  h.steps = r.u32();
  h.M = r.u32();
  h.flags = r.u32();
  h.horizon = r.f64();
  return h;
}

void check_payload(const std::string& bytes, std::size_t header_size,
                   std::size_t payload_doubles) {
  const std::size_t need = header_size + payload_doubles * 8 + 8;
  if (bytes.size() != need)
    throw std::runtime_error("archive: size mismatch");
  const auto* payload =
      reinterpret_cast<const unsigned char*>(bytes.data()) + header_size;
  const std::uint64_t sum = fnv1a64(payload, payload_doubles * 8);
  Reader r{reinterpret_cast<const unsigned char*>(bytes.data()) + need - 8,
           reinterpret_cast<const unsigned char*>(bytes.data()) + need};
  if (r.u64() != sum) throw std::runtime_error("archive: checksum mismatch");
}

}  // namespace

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

void write_field_archive(const std::string& path, const FieldEnsemble& e) {
  const auto& sh = e.shape();
  Header h;
  h.n = sh.dim_n;
  h.K = sh.trunc_k;
  h.channels = sh.channels;
  h.steps = e.grid().num_steps();
  h.M = e.num_samples();
  h.flags = (sh.real_valued ? 1u : 0u) | (e.adapted ? 2u : 0u);
  h.horizon = e.grid().horizon_T;
  std::string buf = header_bytes(h);
  const std::size_t header_size = buf.size();
  buf.reserve(header_size + e.raw().size() * 16 + 8);
  for (const Complex& c : e.raw()) {
    put_f64(buf, c.real());
    put_f64(buf, c.imag());
  }
  const auto* payload =
      reinterpret_cast<const unsigned char*>(buf.data()) + header_size;
  put_u64(buf, fnv1a64(payload, buf.size() - header_size));
  write_bytes(path, buf);
}

FieldEnsemble read_field_archive(const std::string& path) {
  const std::string bytes = file_bytes(path);
  Reader r{reinterpret_cast<const unsigned char*>(bytes.data()),
           reinterpret_cast<const unsigned char*>(bytes.data()) + bytes.size()};
  Header h = parse_header(r);
  if ((h.flags >> 8 & 0xf) != 0)
    throw std::runtime_error("archive: not a field ensemble");
  FieldShape sh{int(h.n), int(h.K), int(h.channels), (h.flags & 1u) != 0};
  const std::size_t vals =
      std::size_t(h.M) * (h.steps + 1) * sh.size();
  const std::size_t header_size = 5 + 4 + 6 * 4 + 8;
  check_payload(bytes, header_size, vals * 2);
  auto grid = std::make_shared<TimeGrid>(TimeGrid::dyadic(
      h.horizon, [&] {
        int d = 0;
        while ((1u << d) < h.steps) ++d;
        if ((1u << d) != h.steps)
          throw std::runtime_error("archive: non-dyadic step count");
        return d;
      }()));
  FieldEnsemble e(sh, grid, int(h.M));
  e.adapted = (h.flags & 2u) != 0;
  for (Complex& c : e.raw()) {
    const double re = r.f64();
    const double im = r.f64();
    c = Complex(re, im);
  }
  return e;
}

void write_lift_archive(const std::string& path, const LiftEnsemble& e) {
  Header h;
  h.n = 0;
  h.K = 0;
  h.channels = e.dim_e;
  h.steps = e.grid->num_steps();
  h.M = std::uint32_t(e.lifts.size());
  h.flags = (1u << 8) | (e.ito_martingale ? 4u : 0u) | (e.broadcast ? 8u : 0u);
  h.horizon = e.grid->horizon_T;
  std::string buf = header_bytes(h);
  const std::size_t header_size = buf.size();
  const int nodes = e.grid->num_nodes();
  const int ee = e.dim_e;
  for (const auto& L : e.lifts)
    for (int i = 0; i < nodes; ++i)
      for (int c = 0; c < ee; ++c) put_f64(buf, L.x_node(i)[c]);
  for (const auto& L : e.lifts)
    for (int i = 0; i + 1 < nodes; ++i)
      for (int c = 0; c < ee * ee; ++c) put_f64(buf, L.xx_step(i)[c]);
  const auto* payload =
      reinterpret_cast<const unsigned char*>(buf.data()) + header_size;
  put_u64(buf, fnv1a64(payload, buf.size() - header_size));
  write_bytes(path, buf);
}

LiftEnsemble read_lift_archive(const std::string& path) {
  const std::string bytes = file_bytes(path);
  Reader r{reinterpret_cast<const unsigned char*>(bytes.data()),
           reinterpret_cast<const unsigned char*>(bytes.data()) + bytes.size()};
  Header h = parse_header(r);
  if ((h.flags >> 8 & 0xf) != 1)
    throw std::runtime_error("archive: not a lift archive");
  const std::size_t header_size = 5 + 4 + 6 * 4 + 8;
  const std::size_t nodes = h.steps + 1;
  const std::size_t vals = std::size_t(h.M) * nodes * h.channels +
                           std::size_t(h.M) * h.steps * h.channels * h.channels;
  check_payload(bytes, header_size, vals);
  int depth = 0;
  while ((1u << depth) < h.steps) ++depth;
  if ((1u << depth) != h.steps)
    throw std::runtime_error("archive: non-dyadic step count");
  auto grid = std::make_shared<TimeGrid>(TimeGrid::dyadic(h.horizon, depth));
  LiftEnsemble e;
  e.grid = grid;
  e.dim_e = int(h.channels);
  e.ito_martingale = (h.flags & 4u) != 0;
  e.broadcast = (h.flags & 8u) != 0;
  e.num_samples = int(h.M);
  e.lifts.reserve(h.M);
  for (std::uint32_t s = 0; s < h.M; ++s) e.lifts.emplace_back(grid, e.dim_e, s);
  for (auto& L : e.lifts)
    for (std::size_t i = 0; i < nodes; ++i)
      for (std::uint32_t c = 0; c < h.channels; ++c)
        L.x_node(int(i))[c] = r.f64();
  for (auto& L : e.lifts)
    for (std::uint32_t i = 0; i < h.steps; ++i)
      for (std::uint32_t c = 0; c < h.channels * h.channels; ++c)
        L.xx_step(int(i))[c] = r.f64();
  for (auto& L : e.lifts) L.finalize();
  return e;
}

}  // namespace rspde
