#include "propfield/ply.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "propfield/error.hpp"

namespace propfield {

namespace {

constexpr std::array<Rgb, 5> kViridis{{
    {68, 1, 84},
    {59, 82, 139},
    {33, 145, 140},
    {94, 201, 98},
    {253, 231, 37},
}};

enum class PropType { Char, UChar, Short, UShort, Int, UInt, Float, Double };

PropType parse_type(const std::string& t) {
  if (t == "char" || t == "int8") return PropType::Char;
  if (t == "uchar" || t == "uint8") return PropType::UChar;
  if (t == "short" || t == "int16") return PropType::Short;
  if (t == "ushort" || t == "uint16") return PropType::UShort;
  if (t == "int" || t == "int32") return PropType::Int;
  if (t == "uint" || t == "uint32") return PropType::UInt;
  if (t == "float" || t == "float32") return PropType::Float;
  if (t == "double" || t == "float64") return PropType::Double;
  throw Error(ErrorKind::UnreadableFile, "unsupported PLY property type " + t);
}

std::size_t type_size(PropType t) {
  switch (t) {
    case PropType::Char:
    case PropType::UChar: return 1;
    case PropType::Short:
    case PropType::UShort: return 2;
    case PropType::Int:
    case PropType::UInt:
    case PropType::Float: return 4;
    case PropType::Double: return 8;
  }
  return 0;
}

template <typename T>
double load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return static_cast<double>(v);
}

double read_binary(const char* p, PropType t) {
  switch (t) {
    case PropType::Char: return load<std::int8_t>(p);
    case PropType::UChar: return load<std::uint8_t>(p);
    case PropType::Short: return load<std::int16_t>(p);
    case PropType::UShort: return load<std::uint16_t>(p);
    case PropType::Int: return load<std::int32_t>(p);
    case PropType::UInt: return load<std::uint32_t>(p);
    case PropType::Float: return load<float>(p);
    case PropType::Double: return load<double>(p);
  }
  return 0.0;
}

struct Property {
  std::string name;
  PropType type;
};

}  // namespace

Rgb colormap(double t) {
  if (!std::isfinite(t)) t = 0.0;
  t = std::clamp(t, 0.0, 1.0) * (kViridis.size() - 1);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t), kViridis.size() - 2);
  const double f = t - static_cast<double>(i);
  Rgb out;
  for (int c = 0; c < 3; ++c) {
    out[c] = static_cast<std::uint8_t>(std::lround(kViridis[i][c] * (1.0 - f) + kViridis[i + 1][c] * f));
  }
  return out;
}

std::vector<Rgb> colorize_values(std::span<const double> values) {
  std::vector<Rgb> out;
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  out.reserve(values.size());
  for (double v : values) out.push_back(colormap(range > 0.0 ? (v - *lo) / range : 0.0));
  return out;
}

void export_ply(const std::filesystem::path& path, std::span<const Eigen::Vector3d> points,
                std::span<const Rgb> colors, std::span<const double> values, PlyFormat format) {
  if (colors.size() != points.size() || values.size() != points.size()) {
    throw Error(ErrorKind::DimensionMismatch, "PLY export needs one color and one value per point");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  out << "ply\n"
      << (format == PlyFormat::Ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n")
      << "element vertex " << points.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "property double value\n"
      << "end_header\n";
  if (format == PlyFormat::Ascii) {
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t i = 0; i < points.size(); ++i) {
      out << points[i].x() << ' ' << points[i].y() << ' ' << points[i].z() << ' ' << int(colors[i][0]) << ' '
          << int(colors[i][1]) << ' ' << int(colors[i][2]) << ' ' << values[i] << '\n';
    }
    return;
  }
  std::vector<char> row(3 * sizeof(double) + 3 + sizeof(double));
  for (std::size_t i = 0; i < points.size(); ++i) {
    char* p = row.data();
    for (int c = 0; c < 3; ++c, p += sizeof(double)) std::memcpy(p, &points[i][c], sizeof(double));
    for (int c = 0; c < 3; ++c) *p++ = static_cast<char>(colors[i][c]);
    std::memcpy(p, &values[i], sizeof(double));
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

PlyCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::UnreadableFile, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw Error(ErrorKind::UnreadableFile, path.string() + " is not a PLY file");

  bool ascii = false;
  std::size_t count = 0;
  bool in_vertex = false;
  std::vector<Property> props;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "ascii") {
        ascii = true;
      } else if (fmt != "binary_little_endian") {
        throw Error(ErrorKind::UnreadableFile, "unsupported PLY format " + fmt);
      }
    } else if (word == "element") {
      std::string name;
      ss >> name;
      in_vertex = name == "vertex";
      if (in_vertex) {
        ss >> count;
      } else {
        throw Error(ErrorKind::UnreadableFile, "only vertex elements are supported");
      }
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ss >> type >> name;
      if (type == "list") throw Error(ErrorKind::UnreadableFile, "list properties are not supported");
      props.push_back({name, parse_type(type)});
    } else if (word == "end_header") {
      break;
    }
  }

  PlyCloud cloud;
  cloud.points.resize(count, Eigen::Vector3d::Zero());
  cloud.colors.resize(count, Rgb{0, 0, 0});
  cloud.values.resize(count, 0.0);
  std::size_t row_size = 0;
  for (const auto& p : props) row_size += type_size(p.type);
  std::vector<char> row(row_size);
  std::vector<double> fields(props.size());
  for (std::size_t i = 0; i < count; ++i) {
    if (ascii) {
      if (!std::getline(in, line)) throw Error(ErrorKind::UnreadableFile, "truncated PLY body");
      std::istringstream ss(line);
      for (auto& f : fields) {
        if (!(ss >> f)) throw Error(ErrorKind::UnreadableFile, "malformed PLY vertex line");
      }
    } else {
      in.read(row.data(), static_cast<std::streamsize>(row_size));
      if (!in) throw Error(ErrorKind::UnreadableFile, "truncated PLY body");
      const char* p = row.data();
      for (std::size_t j = 0; j < props.size(); ++j) {
        fields[j] = read_binary(p, props[j].type);
        p += type_size(props[j].type);
      }
    }
    for (std::size_t j = 0; j < props.size(); ++j) {
      const auto& name = props[j].name;
      if (name == "x") cloud.points[i].x() = fields[j];
      else if (name == "y") cloud.points[i].y() = fields[j];
      else if (name == "z") cloud.points[i].z() = fields[j];
      else if (name == "red") cloud.colors[i][0] = static_cast<std::uint8_t>(fields[j]);
      else if (name == "green") cloud.colors[i][1] = static_cast<std::uint8_t>(fields[j]);
      else if (name == "blue") cloud.colors[i][2] = static_cast<std::uint8_t>(fields[j]);
      else if (name == "value") cloud.values[i] = fields[j];
    }
  }
  return cloud;
}

}  // namespace propfield
