#pragma once

// Map files: a PGM image (255 = navigable, 0 = blocked; image row r is grid
// row r) plus a JSON sidecar {resolution_m_per_px, origin_x_m, origin_y_m}.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajdiffuse/mapguide.hpp"

namespace trajdiffuse {

/// Malformed input file. The message names the file and, where known, the
/// line or byte offset.
class FormatError : public Error {
public:
  using Error::Error;
};

namespace detail {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + p.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + p.string());
}

/// Tokenizer over a PGM header/body that tracks the byte offset and skips
/// '#' comments.
class PgmScanner {
public:
  PgmScanner(const std::string& bytes, std::string file) : b_(bytes), file_(std::move(file)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(file_ + ": byte " + std::to_string(pos_) + " (line " + std::to_string(line()) + "): " + what);
  }

  std::size_t line() const { return 1 + static_cast<std::size_t>(std::count(b_.begin(), b_.begin() + static_cast<std::ptrdiff_t>(pos_), '\n')); }

  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string token() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < b_.size() && !std::isspace(static_cast<unsigned char>(b_[pos_])) && b_[pos_] != '#') ++pos_;
    if (start == pos_) fail("unexpected end of file");
    return b_.substr(start, pos_ - start);
  }

  std::size_t number(const char* what) {
    const std::size_t at = pos_;
    const std::string t = token();
    if (t.empty() || t.size() > 9 || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      pos_ = at;
      skip_space();
      fail(std::string("expected ") + what + ", got '" + t + "'");
    }
    return static_cast<std::size_t>(std::stoul(t));
  }

  /// Exactly one whitespace byte separates the header from binary data.
  void single_space() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) fail("expected whitespace before pixel data");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }
  std::size_t size() const { return b_.size(); }
  unsigned char byte(std::size_t i) const { return static_cast<unsigned char>(b_[i]); }

private:
  const std::string& b_;
  std::string file_;
  std::size_t pos_ = 0;
};

}  // namespace detail

struct MapMetadata {
  double resolution = 1.0;
  Vec2 origin;
};

/// Parses a P2 or P5 PGM with maxval 255. Returns rows, cols and the 0/1 grid.
inline Grid parse_pgm(const std::string& bytes, const std::string& file = "<pgm>") {
  detail::PgmScanner s(bytes, file);
  const std::string magic = s.token();
  if (magic != "P2" && magic != "P5") s.fail("not a PGM file (magic '" + magic + "')");
  const std::size_t cols = s.number("width"), rows = s.number("height"), maxval = s.number("maxval");
  if (rows == 0 || cols == 0) s.fail("empty image");
  if (maxval != 255) s.fail("maxval must be 255");
  Grid g(rows, cols, 0);
  auto store = [&](std::size_t i, std::size_t v) {
    if (v != 0 && v != 255) s.fail("pixel " + std::to_string(i) + " has value " + std::to_string(v) + " (only 0 and 255 allowed)");
    g.cells[i] = v == 255 ? 1 : 0;
  };
  if (magic == "P2") {
    for (std::size_t i = 0; i < rows * cols; ++i) store(i, s.number("pixel value"));
    s.skip_space();
    if (s.pos() != s.size()) s.fail("trailing data after pixels");
  } else {
    s.single_space();
    if (s.size() - s.pos() < rows * cols) s.fail("truncated pixel data");
    if (s.size() - s.pos() > rows * cols) {
      s.seek(s.pos() + rows * cols);
      s.fail("trailing data after pixels");
    }
    const std::size_t base = s.pos();
    for (std::size_t i = 0; i < rows * cols; ++i) {
      s.seek(base + i);
      store(i, s.byte(base + i));
    }
  }
  return g;
}

inline std::string format_pgm(const Grid& g) {
  std::string out = "P5\n" + std::to_string(g.cols) + " " + std::to_string(g.rows) + "\n255\n";
  for (auto v : g.cells) out.push_back(static_cast<char>(v ? 255 : 0));
  return out;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& pgm) {
  auto p = pgm;
  p.replace_extension(".json");
  return p;
}

inline void write_map(const NavEnvironment& env, const std::filesystem::path& pgm) {
  Grid g(env.rows(), env.cols(), 0);
  g.cells = env.nav_grid();
  detail::write_file(pgm, format_pgm(g));
  nlohmann::ordered_json meta;
  meta["resolution_m_per_px"] = env.resolution();
  meta["origin_x_m"] = env.origin().x;
  meta["origin_y_m"] = env.origin().y;
  detail::write_file(sidecar_path(pgm), meta.dump(2) + "\n");
}

inline MapMetadata parse_map_metadata(const std::string& text, const std::string& file) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(file + ": byte " + std::to_string(e.byte) + ": invalid JSON");
  }
  MapMetadata m;
  auto number = [&](const char* key) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_number()) throw FormatError(file + ": missing numeric field '" + key + "'");
    return j[key].get<double>();
  };
  m.resolution = number("resolution_m_per_px");
  m.origin = {number("origin_x_m"), number("origin_y_m")};
  if (!(m.resolution > 0.0) || !std::isfinite(m.resolution)) throw FormatError(file + ": resolution_m_per_px must be positive");
  return m;
}

inline NavEnvironment read_map(const std::filesystem::path& pgm) {
  const auto meta_path = sidecar_path(pgm);
  if (!std::filesystem::exists(meta_path)) throw FormatError(pgm.string() + ": missing map metadata (" + meta_path.string() + ")");
  const MapMetadata meta = parse_map_metadata(detail::read_file(meta_path), meta_path.string());
  Grid g = parse_pgm(detail::read_file(pgm), pgm.string());
  if (std::find(g.cells.begin(), g.cells.end(), std::uint8_t{1}) == g.cells.end())
    throw FormatError(pgm.string() + ": map has no navigable pixel");
  return NavEnvironment(g.rows, g.cols, std::move(g.cells), meta.resolution, meta.origin);
}

}  // namespace trajdiffuse
