#include "shapegrasp/mesh.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace shapegrasp {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

void fan(const std::vector<int>& poly, std::vector<Vec3i>& out) {
  for (std::size_t k = 1; k + 1 < poly.size(); ++k)
    out.emplace_back(poly[0], poly[k], poly[k + 1]);
}

class LineReader {
 public:
  LineReader(std::istream& in, std::string file)
      : in_(in), file_(std::move(file)) {}

  // Next non-empty, non-comment line; false at EOF.
  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++number_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      return true;
    }
    return false;
  }
  std::string require(const char* what) {
    std::string line;
    if (!next(line)) fail(std::string("unexpected end of file, expected ") + what);
    return line;
  }
  [[noreturn]] void fail(const std::string& why) const {
    throw MalformedFileError(file_, number_, why);
  }
  std::size_t number() const { return number_; }
  std::istream& stream() { return in_; }

 private:
  std::istream& in_;
  std::string file_;
  std::size_t number_ = 0;
};

TriangleMesh finish(std::vector<Vec3> verts, std::vector<Vec3i> tris,
                    const std::string& file) {
  if (tris.empty())
    throw Error(ErrorKind::EmptyGeometry, file + ": mesh has no faces");
  auto mesh = remove_degenerate_triangles(
      TriangleMesh(std::move(verts), std::move(tris)));
  if (mesh.empty())
    throw Error(ErrorKind::EmptyGeometry,
                file + ": mesh has no non-degenerate faces");
  return mesh;
}

TriangleMesh read_off(std::istream& in, const std::string& file) {
  LineReader reader(in, file);
  std::string line = reader.require("OFF header");
  std::istringstream header(line);
  std::string magic;
  header >> magic;
  if (magic.rfind("OFF", 0) != 0) reader.fail("missing OFF magic");
  long nv = -1, nf = -1, ne = 0;
  if (!(header >> nv >> nf)) {
    std::istringstream counts(reader.require("OFF counts"));
    if (!(counts >> nv >> nf)) reader.fail("bad OFF element counts");
    counts >> ne;
  }
  if (nv < 0 || nf < 0) reader.fail("negative element count");
  std::vector<Vec3> verts;
  verts.reserve(static_cast<std::size_t>(nv));
  for (long i = 0; i < nv; ++i) {
    std::istringstream ls(reader.require("vertex"));
    double x, y, z;
    if (!(ls >> x >> y >> z)) reader.fail("bad vertex record");
    verts.emplace_back(x, y, z);
  }
  std::vector<Vec3i> tris;
  for (long i = 0; i < nf; ++i) {
    std::istringstream ls(reader.require("face"));
    int k;
    if (!(ls >> k) || k < 3) reader.fail("bad face arity");
    std::vector<int> poly(static_cast<std::size_t>(k));
    for (auto& idx : poly) {
      if (!(ls >> idx)) reader.fail("truncated face record");
      if (idx < 0 || idx >= nv) reader.fail("face index out of range");
    }
    fan(poly, tris);
  }
  return finish(std::move(verts), std::move(tris), file);
}

TriangleMesh read_obj(std::istream& in, const std::string& file) {
  LineReader reader(in, file);
  std::vector<Vec3> verts;
  std::vector<Vec3i> tris;
  std::string line;
  while (reader.next(line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) reader.fail("bad vertex record");
      verts.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        int idx = 0;
        try {
          idx = std::stoi(tok.substr(0, tok.find('/')));
        } catch (const std::exception&) {
          reader.fail("bad face index '" + tok + "'");
        }
        const int nv = static_cast<int>(verts.size());
        idx = idx < 0 ? nv + idx : idx - 1;
        if (idx < 0 || idx >= nv) reader.fail("face index out of range");
        poly.push_back(idx);
      }
      if (poly.size() < 3) reader.fail("face with fewer than 3 vertices");
      fan(poly, tris);
    }
  }
  return finish(std::move(verts), std::move(tris), file);
}

enum class PlyEncoding { Ascii, BinaryLE, BinaryBE };

struct PlyProperty {
  std::string name;
  std::string type;
  bool is_list = false;
  std::string count_type;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" ||
      t == "uint32" || t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

template <typename T>
T read_raw(std::istream& in, bool swap) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (swap) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

double read_binary_scalar(std::istream& in, const std::string& t, bool swap) {
  if (t == "char" || t == "int8") return read_raw<std::int8_t>(in, swap);
  if (t == "uchar" || t == "uint8") return read_raw<std::uint8_t>(in, swap);
  if (t == "short" || t == "int16") return read_raw<std::int16_t>(in, swap);
  if (t == "ushort" || t == "uint16") return read_raw<std::uint16_t>(in, swap);
  if (t == "int" || t == "int32") return read_raw<std::int32_t>(in, swap);
  if (t == "uint" || t == "uint32") return read_raw<std::uint32_t>(in, swap);
  if (t == "float" || t == "float32") return read_raw<float>(in, swap);
  return read_raw<double>(in, swap);
}

TriangleMesh read_ply(std::istream& in, const std::string& file) {
  std::size_t line_no = 0;
  auto getline = [&](std::string& line) {
    if (!std::getline(in, line))
      throw MalformedFileError(file, line_no + 1, "truncated PLY header");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  std::string line;
  getline(line);
  if (line != "ply") throw MalformedFileError(file, line_no, "missing ply magic");
  PlyEncoding enc = PlyEncoding::Ascii;
  std::vector<PlyElement> elements;
  bool have_format = false;
  for (;;) {
    getline(line);
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw == "comment" || kw == "obj_info" || kw.empty()) continue;
    if (kw == "format") {
      std::string f;
      ls >> f;
      if (f == "ascii") enc = PlyEncoding::Ascii;
      else if (f == "binary_little_endian") enc = PlyEncoding::BinaryLE;
      else if (f == "binary_big_endian") enc = PlyEncoding::BinaryBE;
      else throw MalformedFileError(file, line_no, "unknown PLY format " + f);
      have_format = true;
    } else if (kw == "element") {
      PlyElement e;
      if (!(ls >> e.name >> e.count))
        throw MalformedFileError(file, line_no, "bad element line");
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty())
        throw MalformedFileError(file, line_no, "property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        p.is_list = true;
        ls >> p.count_type >> p.type >> p.name;
        if (!ply_type_size(p.count_type) || !ply_type_size(p.type))
          throw MalformedFileError(file, line_no, "unknown list type");
      } else {
        p.type = t;
        ls >> p.name;
        if (!ply_type_size(p.type))
          throw MalformedFileError(file, line_no, "unknown property type " + t);
      }
      elements.back().props.push_back(p);
    } else {
      throw MalformedFileError(file, line_no, "unexpected header keyword " + kw);
    }
  }
  if (!have_format) throw MalformedFileError(file, line_no, "missing format line");

  const bool swap =
      (enc == PlyEncoding::BinaryLE && std::endian::native != std::endian::little) ||
      (enc == PlyEncoding::BinaryBE && std::endian::native != std::endian::big);
  std::vector<Vec3> verts;
  std::vector<Vec3i> tris;
  std::size_t record = line_no;
  for (const auto& e : elements) {
    for (std::size_t i = 0; i < e.count; ++i) {
      ++record;
      std::istringstream ascii_line;
      if (enc == PlyEncoding::Ascii) {
        std::string l;
        if (!std::getline(in, l))
          throw MalformedFileError(file, record, "truncated " + e.name + " data");
        ascii_line.str(l);
      }
      Vec3 pos = Vec3::Zero();
      std::vector<int> poly;
      for (const auto& p : e.props) {
        auto scalar = [&](const std::string& type) {
          double v = 0;
          if (enc == PlyEncoding::Ascii) {
            if (!(ascii_line >> v))
              throw MalformedFileError(file, record, "bad ascii value");
          } else {
            v = read_binary_scalar(in, type, swap);
            if (!in)
              throw MalformedFileError(file, record,
                                       "truncated binary " + e.name + " data");
          }
          return v;
        };
        if (p.is_list) {
          const auto n = static_cast<long>(scalar(p.count_type));
          if (n < 0 || n > 1 << 20)
            throw MalformedFileError(file, record, "bad list length");
          std::vector<int> vals(static_cast<std::size_t>(n));
          for (auto& v : vals) v = static_cast<int>(scalar(p.type));
          if (e.name == "face" &&
              (p.name == "vertex_indices" || p.name == "vertex_index"))
            poly = std::move(vals);
        } else {
          const double v = scalar(p.type);
          if (e.name == "vertex") {
            if (p.name == "x") pos.x() = v;
            else if (p.name == "y") pos.y() = v;
            else if (p.name == "z") pos.z() = v;
          }
        }
      }
      if (e.name == "vertex") verts.push_back(pos);
      if (e.name == "face") {
        if (poly.size() < 3)
          throw MalformedFileError(file, record, "face with fewer than 3 vertices");
        for (int idx : poly)
          if (idx < 0 || idx >= static_cast<int>(verts.size()))
            throw MalformedFileError(file, record, "face index out of range");
        fan(poly, tris);
      }
    }
  }
  return finish(std::move(verts), std::move(tris), file);
}

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native != std::endian::little)
    std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

}  // namespace

MeshFormat format_from_path(const std::filesystem::path& path) {
  const std::string ext = lower(path.extension().string());
  if (ext == ".off") return MeshFormat::Off;
  if (ext == ".obj") return MeshFormat::Obj;
  if (ext == ".ply") return MeshFormat::Ply;
  throw Error(ErrorKind::InvalidArgument,
              "unsupported mesh extension '" + ext + "' (OFF, OBJ, PLY)");
}

TriangleMesh load_mesh(const std::filesystem::path& path) {
  return load_mesh(path, format_from_path(path));
}

TriangleMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  const std::string name = path.string();
  switch (format) {
    case MeshFormat::Off: return read_off(in, name);
    case MeshFormat::Obj: return read_obj(in, name);
    case MeshFormat::Ply: return read_ply(in, name);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown mesh format");
}

void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path) {
  const MeshFormat format = format_from_path(path);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.precision(17);
  if (format == MeshFormat::Off) {
    out << "OFF\n" << mesh.vertex_count() << ' ' << mesh.triangle_count() << " 0\n";
    for (const auto& v : mesh.vertices())
      out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& t : mesh.triangles())
      out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  } else if (format == MeshFormat::Obj) {
    for (const auto& v : mesh.vertices())
      out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& t : mesh.triangles())
      out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  } else {
    out << "ply\nformat binary_little_endian 1.0\n"
        << "element vertex " << mesh.vertex_count() << "\n"
        << "property double x\nproperty double y\nproperty double z\n"
        << "element face " << mesh.triangle_count() << "\n"
        << "property list uchar int vertex_indices\nend_header\n";
    for (const auto& v : mesh.vertices()) {
      write_le(out, v.x());
      write_le(out, v.y());
      write_le(out, v.z());
    }
    for (const auto& t : mesh.triangles()) {
      write_le<std::uint8_t>(out, 3);
      for (int k = 0; k < 3; ++k) write_le<std::int32_t>(out, t[k]);
    }
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace shapegrasp
