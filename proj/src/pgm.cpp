#include "polyroom/pgm.hpp"

#include <cctype>
#include <fstream>
#include <string>

namespace polyroom {

void write_pgm(const std::filesystem::path& path, const Grid<unsigned char>& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.cells().data()), static_cast<std::streamsize>(image.size()));
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

namespace {

long next_header_int(std::istream& in, const std::string& name) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  long value = -1;
  if (!(in >> value) || value < 0) throw Error(ErrorKind::kSchema, "bad PGM header in " + name);
  return value;
}

}  // namespace

Grid<unsigned char> read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '5') throw Error(ErrorKind::kSchema, path.string() + " is not a P5 PGM");
  const long width = next_header_int(in, path.string());
  const long height = next_header_int(in, path.string());
  const long maxval = next_header_int(in, path.string());
  if (maxval != 255) throw Error(ErrorKind::kSchema, path.string() + ": only maxval 255 is supported");
  in.get();  // single whitespace before the raster
  Grid<unsigned char> image(static_cast<std::size_t>(height), static_cast<std::size_t>(width));
  in.read(reinterpret_cast<char*>(image.cells().data()), static_cast<std::streamsize>(image.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.size())) {
    throw Error(ErrorKind::kSchema, path.string() + ": truncated raster");
  }
  return image;
}

}  // namespace polyroom
