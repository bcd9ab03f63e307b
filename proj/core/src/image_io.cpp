#include "boltzseg/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "boltzseg/errors.hpp"

namespace boltzseg {

namespace {

void require_1ch(const SpatialField& f, const char* op) {
  f.validate();
  if (f.channels != 1) throw InvalidArgument(std::string(op) + ": field must be 1-channel");
}

void skip_pnm_ws(std::istream& in) {
  int c = in.peek();
  while (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '#') {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      in.get();
    }
    c = in.peek();
  }
}

}  // namespace

void write_pgm(const SpatialField& field, const std::string& path) {
  require_1ch(field, "write_pgm");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : field.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pgm: cannot open " + path);
  out << "P5\n" << field.width << " " << field.height << "\n255\n";
  for (double v : field.data) {
    double q = (v - lo) * scale;
    int b = static_cast<int>(std::lround(q));
    b = std::clamp(b, 0, 255);
    out.put(static_cast<char>(b));
  }
  if (!out) throw IoError("write_pgm: write failed for " + path);

  std::ofstream side(path + ".txt");
  if (!side) throw IoError("write_pgm: cannot open sidecar for " + path);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "min = %.17g\nmax = %.17g\n", lo, hi);
  side << "format = pgm-p5\n" << buf;
}

void write_pgm_raw(const SpatialField& field, const std::string& path) {
  require_1ch(field, "write_pgm_raw");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pgm_raw: cannot open " + path);
  out << "P5\n" << field.width << " " << field.height << "\n255\n";
  for (double v : field.data) {
    int b = std::clamp(static_cast<int>(std::lround(v)), 0, 255);
    out.put(static_cast<char>(b));
  }
  if (!out) throw IoError("write_pgm_raw: write failed for " + path);
}

SpatialField read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pgm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw IoError("read_pgm: not a P5 file: " + path);
  skip_pnm_ws(in);
  int w, h, maxval;
  in >> w;
  skip_pnm_ws(in);
  in >> h;
  skip_pnm_ws(in);
  in >> maxval;
  if (!in || w < 1 || h < 1 || maxval != 255)
    throw IoError("read_pgm: bad header in " + path);
  in.get();  // single whitespace after maxval
  SpatialField f(h, w, 1);
  for (size_t i = 0; i < f.data.size(); ++i) {
    int c = in.get();
    if (c == EOF) throw IoError("read_pgm: truncated " + path);
    f.data[i] = static_cast<double>(c);
  }
  return f;
}

void write_pbm(const SpatialField& field, const std::string& path) {
  require_1ch(field, "write_pbm");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pbm: cannot open " + path);
  out << "P4\n" << field.width << " " << field.height << "\n";
  int bytes_per_row = (field.width + 7) / 8;
  for (int y = 0; y < field.height; ++y) {
    for (int bx = 0; bx < bytes_per_row; ++bx) {
      unsigned char packed = 0;
      for (int bit = 0; bit < 8; ++bit) {
        int x = bx * 8 + bit;
        if (x < field.width && field.at(y, x, 0) != 0.0) packed |= 0x80u >> bit;
      }
      out.put(static_cast<char>(packed));
    }
  }
  if (!out) throw IoError("write_pbm: write failed for " + path);
}

SpatialField read_pbm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pbm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P4") throw IoError("read_pbm: not a P4 file: " + path);
  skip_pnm_ws(in);
  int w, h;
  in >> w;
  skip_pnm_ws(in);
  in >> h;
  if (!in || w < 1 || h < 1) throw IoError("read_pbm: bad header in " + path);
  in.get();
  SpatialField f(h, w, 1);
  int bytes_per_row = (w + 7) / 8;
  for (int y = 0; y < h; ++y) {
    for (int bx = 0; bx < bytes_per_row; ++bx) {
      int c = in.get();
      if (c == EOF) throw IoError("read_pbm: truncated " + path);
      for (int bit = 0; bit < 8; ++bit) {
        int x = bx * 8 + bit;
        if (x < w) f.at(y, x, 0) = (c & (0x80 >> bit)) ? 1.0 : 0.0;
      }
    }
  }
  return f;
}

}  // namespace boltzseg
