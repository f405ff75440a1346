#pragma once
// File formats:
//   - PPM (P6, 8-bit, 3 bands): interchange with standard viewers; writing
//     quantizes to [0, 255] integers.
//   - BSQ-F32: "BSQF32 <width> <height> <bands>\n" followed by band-sequential
//     little-endian 32-bit floats. Lossless round-trip at float precision.
//   - OBS1: degraded observation; text header
//     "OBS1 <width> <height> <bands> <kept> <blur> <sigma>\n" followed, per
//     band, by <kept> little-endian uint32 mask indices then <kept>
//     little-endian float64 measurements.
//   - NLG1: neighborhood graph cache; text header "NLG1 <pixels> <maxdeg>\n"
//     followed, per pixel, by a uint32 count then count (uint32 index,
//     float64 weight) pairs.

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "stnltv/core.hpp"
#include "stnltv/nlweights.hpp"

namespace stnltv {
namespace io_detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& os, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline bool get_bytes(std::istream& is, unsigned char* b, int n, std::size_t& offset) {
  is.read(reinterpret_cast<char*>(b), n);
  if (is.gcount() != n) return false;
  offset += n;
  return true;
}

inline std::uint32_t get_u32(std::istream& is, std::size_t& offset, const char* what) {
  unsigned char b[4];
  if (!get_bytes(is, b, 4, offset))
    throw ParseError(std::string("truncated ") + what, offset);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& is, std::size_t& offset, const char* what) {
  const std::uint32_t v = get_u32(is, offset, what);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

inline double get_f64(std::istream& is, std::size_t& offset, const char* what) {
  unsigned char b[8];
  if (!get_bytes(is, b, 8, offset))
    throw ParseError(std::string("truncated ") + what, offset);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

// Reads one whitespace/comment-delimited PPM token.
inline std::string ppm_token(std::istream& is, std::size_t& offset) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    ++offset;
    if (c == '#') {
      while ((c = is.get()) != EOF) {
        ++offset;
        if (c == '\n') break;
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw ParseError("unexpected end of PPM header", offset);
  return tok;
}

inline int parse_int(const std::string& s, std::size_t offset, const char* what) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ParseError(std::string("bad ") + what + " '" + s + "'", offset);
  }
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return is;
}

}  // namespace io_detail

inline void write_ppm(const MultibandImage& img, std::ostream& os) {
  if (img.bands != 3) throw std::invalid_argument("write_ppm: PPM needs exactly 3 bands");
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int r = 0; r < 3; ++r) {
        const double v = img.at(r, y, x);
        row[static_cast<std::size_t>(x) * 3 + r] =
            static_cast<unsigned char>(std::clamp<long>(std::lround(v), 0, 255));
      }
    os.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
}

inline MultibandImage read_ppm(std::istream& is) {
  std::size_t offset = 0;
  const std::string magic = io_detail::ppm_token(is, offset);
  if (magic != "P6") throw ParseError("not a P6 PPM (magic '" + magic + "')", 0);
  const int w = io_detail::parse_int(io_detail::ppm_token(is, offset), offset, "width");
  const int h = io_detail::parse_int(io_detail::ppm_token(is, offset), offset, "height");
  const int maxval = io_detail::parse_int(io_detail::ppm_token(is, offset), offset, "maxval");
  if (w < 1 || h < 1) throw ParseError("bad PPM dimensions", offset);
  if (maxval != 255) throw ParseError("unsupported PPM maxval " + std::to_string(maxval), offset);
  MultibandImage img(w, h, 3);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    is.read(reinterpret_cast<char*>(row.data()), row.size());
    if (static_cast<std::size_t>(is.gcount()) != row.size())
      throw ParseError("truncated PPM payload", offset + is.gcount());
    offset += row.size();
    for (int x = 0; x < w; ++x)
      for (int r = 0; r < 3; ++r)
        img.at(r, y, x) = row[static_cast<std::size_t>(x) * 3 + r];
  }
  return img;
}

inline void write_bsq(const MultibandImage& img, std::ostream& os) {
  os << "BSQF32 " << img.width << " " << img.height << " " << img.bands << "\n";
  for (double v : img.data) io_detail::put_f32(os, static_cast<float>(v));
}

inline MultibandImage read_bsq(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw ParseError("missing BSQ header", 0);
  std::istringstream hs(header);
  std::string magic;
  int w = 0, h = 0, r = 0;
  hs >> magic >> w >> h >> r;
  if (magic != "BSQF32" || hs.fail())
    throw ParseError("not a BSQF32 header: '" + header + "'", 0);
  if (w < 1 || h < 1 || r < 1) throw ParseError("bad BSQ dimensions", 0);
  std::size_t offset = header.size() + 1;
  MultibandImage img(w, h, r);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = io_detail::get_f32(is, offset, "BSQ payload");
  return img;
}

// Sniffs the magic bytes; accepts PPM (P6) and BSQ-F32.
inline MultibandImage read_image(const std::string& path) {
  auto is = io_detail::open_in(path);
  char c0 = static_cast<char>(is.peek());
  if (c0 == 'P') return read_ppm(is);
  return read_bsq(is);
}

// Picks the format by extension (.ppm or anything else = BSQ-F32).
inline void write_image(const MultibandImage& img, const std::string& path) {
  auto os = io_detail::open_out(path);
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ppm")
    write_ppm(img, os);
  else
    write_bsq(img, os);
}

inline void write_observation(const DegradedObservation& obs, const std::string& path) {
  obs.validate();
  auto os = io_detail::open_out(path);
  char head[160];
  std::snprintf(head, sizeof(head), "OBS1 %d %d %d %d %d %.17g\n", obs.width, obs.height,
                obs.bands, obs.kept, obs.blur, obs.sigma);
  os << head;
  for (int r = 0; r < obs.bands; ++r) {
    for (int k = 0; k < obs.kept; ++k)
      io_detail::put_u32(os, static_cast<std::uint32_t>(obs.masks[r][k]));
    for (int k = 0; k < obs.kept; ++k)
      io_detail::put_f64(os, obs.values[static_cast<std::size_t>(r) * obs.kept + k]);
  }
}

inline DegradedObservation read_observation(const std::string& path) {
  auto is = io_detail::open_in(path);
  std::string header;
  if (!std::getline(is, header)) throw ParseError("missing OBS header", 0);
  std::istringstream hs(header);
  std::string magic;
  DegradedObservation obs;
  hs >> magic >> obs.width >> obs.height >> obs.bands >> obs.kept >> obs.blur >> obs.sigma;
  if (magic != "OBS1" || hs.fail())
    throw ParseError("not an OBS1 header: '" + header + "'", 0);
  std::size_t offset = header.size() + 1;
  if (obs.width < 1 || obs.height < 1 || obs.bands < 1 || obs.kept < 1)
    throw ParseError("bad OBS dimensions", 0);
  obs.masks.assign(obs.bands, {});
  obs.values.assign(static_cast<std::size_t>(obs.bands) * obs.kept, 0.0);
  for (int r = 0; r < obs.bands; ++r) {
    obs.masks[r].resize(obs.kept);
    for (int k = 0; k < obs.kept; ++k)
      obs.masks[r][k] = static_cast<int>(io_detail::get_u32(is, offset, "OBS mask"));
    for (int k = 0; k < obs.kept; ++k)
      obs.values[static_cast<std::size_t>(r) * obs.kept + k] =
          io_detail::get_f64(is, offset, "OBS values");
  }
  obs.validate();
  return obs;
}

inline void save_graph(const NeighborhoodGraph& g, const std::string& path) {
  auto os = io_detail::open_out(path);
  os << "NLG1 " << g.pixels << " " << g.max_degree() << "\n";
  for (int l = 0; l < g.pixels; ++l) {
    const int deg = g.degree(l);
    io_detail::put_u32(os, static_cast<std::uint32_t>(deg));
    for (int k = 0; k < deg; ++k) {
      io_detail::put_u32(os, static_cast<std::uint32_t>(g.neighbor[g.offset[l] + k]));
      io_detail::put_f64(os, g.weight[g.offset[l] + k]);
    }
  }
}

inline NeighborhoodGraph load_graph(const std::string& path) {
  auto is = io_detail::open_in(path);
  std::string header;
  if (!std::getline(is, header)) throw ParseError("missing NLG header", 0);
  std::istringstream hs(header);
  std::string magic;
  int pixels = 0, maxdeg = 0;
  hs >> magic >> pixels >> maxdeg;
  if (magic != "NLG1" || hs.fail())
    throw ParseError("not an NLG1 header: '" + header + "'", 0);
  if (pixels < 1) throw ParseError("bad NLG pixel count", 0);
  std::size_t offset = header.size() + 1;
  NeighborhoodGraph g;
  g.pixels = pixels;
  g.offset.assign(pixels + 1, 0);
  for (int l = 0; l < pixels; ++l) {
    const int deg = static_cast<int>(io_detail::get_u32(is, offset, "NLG degree"));
    g.offset[l + 1] = g.offset[l] + deg;
    for (int k = 0; k < deg; ++k) {
      g.neighbor.push_back(static_cast<int>(io_detail::get_u32(is, offset, "NLG neighbor")));
      g.weight.push_back(io_detail::get_f64(is, offset, "NLG weight"));
    }
  }
  return g;
}

}  // namespace stnltv
