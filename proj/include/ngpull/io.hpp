#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ngpull/point_cloud.hpp"
#include "ngpull/vec3.hpp"

namespace ngp {

enum class PointFormat { xyz, ply };
enum class MeshFormat { obj, ply };

namespace detail {

inline std::runtime_error parse_error(const std::string& path, std::size_t line, const std::string& what) {
    return std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

inline bool parse_double(const std::string& tok, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(tok, &pos);
        return pos == tok.size();
    } catch (...) {
        return false;
    }
}

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> toks;
    std::istringstream ss(line);
    std::string t;
    while (ss >> t) toks.push_back(t);
    return toks;
}

struct PlyProperty {
    std::string name;
    std::string type;
    bool is_list = false;
    std::string list_count_type;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
};

struct PlyHeader {
    bool binary = false;
    std::vector<PlyElement> elements;
    std::size_t header_lines = 0;
};

inline std::size_t ply_type_size(const std::string& t) {
    if (t == "char" || t == "int8" || t == "uchar" || t == "uint8") return 1;
    if (t == "short" || t == "int16" || t == "ushort" || t == "uint16") return 2;
    if (t == "int" || t == "int32" || t == "uint" || t == "uint32" || t == "float" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    throw std::runtime_error("ply: unknown property type '" + t + "'");
}

inline PlyHeader read_ply_header(std::istream& in, const std::string& path) {
    PlyHeader header;
    std::string line;
    std::size_t lineno = 0;

    auto next_line = [&]() -> std::string& {
        if (!std::getline(in, line)) throw parse_error(path, lineno, "unexpected end of ply header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++lineno;
        return line;
    };

    if (next_line() != "ply") throw parse_error(path, lineno, "missing 'ply' magic");
    bool format_seen = false;
    for (;;) {
        const auto toks = split_ws(next_line());
        if (toks.empty()) continue;
        if (toks[0] == "comment" || toks[0] == "obj_info") continue;
        if (toks[0] == "format") {
            if (toks.size() < 3) throw parse_error(path, lineno, "malformed format line");
            if (toks[1] == "ascii")
                header.binary = false;
            else if (toks[1] == "binary_little_endian")
                header.binary = true;
            else
                throw parse_error(path, lineno, "unsupported ply format '" + toks[1] + "'");
            format_seen = true;
        } else if (toks[0] == "element") {
            if (toks.size() != 3) throw parse_error(path, lineno, "malformed element line");
            PlyElement el;
            el.name = toks[1];
            try {
                el.count = std::stoul(toks[2]);
            } catch (...) {
                throw parse_error(path, lineno, "bad element count '" + toks[2] + "'");
            }
            header.elements.push_back(el);
        } else if (toks[0] == "property") {
            if (header.elements.empty()) throw parse_error(path, lineno, "property before element");
            PlyProperty prop;
            if (toks.size() == 5 && toks[1] == "list") {
                prop.is_list = true;
                prop.list_count_type = toks[2];
                prop.type = toks[3];
                prop.name = toks[4];
            } else if (toks.size() == 3) {
                prop.type = toks[1];
                prop.name = toks[2];
            } else {
                throw parse_error(path, lineno, "malformed property line");
            }
            header.elements.back().properties.push_back(prop);
        } else if (toks[0] == "end_header") {
            break;
        } else {
            throw parse_error(path, lineno, "unexpected header token '" + toks[0] + "'");
        }
    }
    if (!format_seen) throw parse_error(path, lineno, "ply header missing format line");
    header.header_lines = lineno;
    return header;
}

inline double read_binary_scalar(std::istream& in, const std::string& type, const std::string& path) {
    unsigned char buf[8];
    const std::size_t n = ply_type_size(type);
    if (!in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n)))
        throw std::runtime_error(path + ": truncated binary ply payload");
    auto as = [&buf]<typename T>() {
        T v;
        std::memcpy(&v, buf, sizeof(T));
        return static_cast<double>(v);
    };
    if (type == "char" || type == "int8") return as.operator()<std::int8_t>();
    if (type == "uchar" || type == "uint8") return as.operator()<std::uint8_t>();
    if (type == "short" || type == "int16") return as.operator()<std::int16_t>();
    if (type == "ushort" || type == "uint16") return as.operator()<std::uint16_t>();
    if (type == "int" || type == "int32") return as.operator()<std::int32_t>();
    if (type == "uint" || type == "uint32") return as.operator()<std::uint32_t>();
    if (type == "float" || type == "float32") return as.operator()<float>();
    return as.operator()<double>();  // double / float64
}

struct PlyContents {
    std::vector<Vec3d> vertices;
    std::vector<std::array<int, 3>> faces;
    bool has_face_element = false;
};

inline PlyContents read_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    const PlyHeader header = read_ply_header(in, path);

    PlyContents out;
    std::size_t lineno = header.header_lines;

    auto ascii_tokens = [&](const char* what) {
        std::string line;
        if (!std::getline(in, line)) throw parse_error(path, lineno, std::string("unexpected end of file reading ") + what);
        ++lineno;
        return split_ws(line);
    };

    for (const auto& el : header.elements) {
        const bool is_vertex = el.name == "vertex";
        const bool is_face = el.name == "face";
        if (is_face) out.has_face_element = true;

        int ix = -1, iy = -1, iz = -1;
        if (is_vertex) {
            for (std::size_t p = 0; p < el.properties.size(); ++p) {
                if (el.properties[p].name == "x") ix = static_cast<int>(p);
                if (el.properties[p].name == "y") iy = static_cast<int>(p);
                if (el.properties[p].name == "z") iz = static_cast<int>(p);
            }
            if (ix < 0 || iy < 0 || iz < 0)
                throw std::runtime_error(path + ": ply vertex element lacks x/y/z properties");
            out.vertices.reserve(el.count);
        }

        for (std::size_t row = 0; row < el.count; ++row) {
            std::vector<double> scalars;
            std::vector<long> list_values;
            if (header.binary) {
                for (const auto& prop : el.properties) {
                    if (prop.is_list) {
                        const auto n = static_cast<std::size_t>(read_binary_scalar(in, prop.list_count_type, path));
                        for (std::size_t k = 0; k < n; ++k)
                            list_values.push_back(static_cast<long>(read_binary_scalar(in, prop.type, path)));
                    } else {
                        scalars.push_back(read_binary_scalar(in, prop.type, path));
                    }
                }
            } else {
                const auto toks = ascii_tokens(el.name.c_str());
                std::size_t cursor = 0;
                auto take = [&]() -> double {
                    if (cursor >= toks.size()) throw parse_error(path, lineno, "too few values in " + el.name + " row");
                    double v;
                    if (!parse_double(toks[cursor], v)) throw parse_error(path, lineno, "bad number '" + toks[cursor] + "'");
                    ++cursor;
                    return v;
                };
                for (const auto& prop : el.properties) {
                    if (prop.is_list) {
                        const auto n = static_cast<std::size_t>(take());
                        for (std::size_t k = 0; k < n; ++k) list_values.push_back(static_cast<long>(take()));
                    } else {
                        scalars.push_back(take());
                    }
                }
            }

            if (is_vertex) {
                out.vertices.push_back({scalars[static_cast<std::size_t>(ix)],
                                        scalars[static_cast<std::size_t>(iy)],
                                        scalars[static_cast<std::size_t>(iz)]});
            } else if (is_face && !list_values.empty()) {
                if (list_values.size() < 3)
                    throw std::runtime_error(path + ": face with fewer than 3 indices");
                for (std::size_t k = 2; k < list_values.size(); ++k) {
                    out.faces.push_back({static_cast<int>(list_values[0]),
                                         static_cast<int>(list_values[k - 1]),
                                         static_cast<int>(list_values[k])});
                }
            }
        }
    }
    return out;
}

inline void write_double(std::ostream& os, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
}

}  // namespace detail

inline PointFormat point_format_from_path(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".ply") == 0) return PointFormat::ply;
    return PointFormat::xyz;
}

inline MeshFormat mesh_format_from_path(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".ply") == 0) return MeshFormat::ply;
    return MeshFormat::obj;
}

// Raw world-space points, in file order.
inline std::vector<Vec3d> load_points(const std::string& path, PointFormat format) {
    std::vector<Vec3d> points;
    if (format == PointFormat::xyz) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open '" + path + "'");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto toks = detail::split_ws(line);
            if (toks.empty()) continue;
            if (toks.size() < 3) throw detail::parse_error(path, lineno, "expected 3 coordinates");
            Vec3d p;
            for (int k = 0; k < 3; ++k) {
                if (!detail::parse_double(toks[static_cast<std::size_t>(k)], p[static_cast<std::size_t>(k)]))
                    throw detail::parse_error(path, lineno, "bad number '" + toks[static_cast<std::size_t>(k)] + "'");
            }
            points.push_back(p);
        }
    } else {
        points = detail::read_ply(path).vertices;
    }
    if (points.empty()) throw std::runtime_error(path + ": no points found");
    return points;
}

inline std::vector<Vec3d> load_points(const std::string& path) {
    return load_points(path, point_format_from_path(path));
}

inline void save_mesh(const TriangleMesh& mesh, const std::string& path, MeshFormat format) {
    mesh.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    if (format == MeshFormat::obj) {
        for (const auto& v : mesh.vertices) {
            out << "v ";
            detail::write_double(out, v.x);
            out << ' ';
            detail::write_double(out, v.y);
            out << ' ';
            detail::write_double(out, v.z);
            out << '\n';
        }
        for (const auto& t : mesh.triangles)
            out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    } else {
        out << "ply\nformat ascii 1.0\n";
        out << "element vertex " << mesh.vertices.size() << '\n';
        out << "property double x\nproperty double y\nproperty double z\n";
        out << "element face " << mesh.triangles.size() << '\n';
        out << "property list uchar int vertex_indices\nend_header\n";
        for (const auto& v : mesh.vertices) {
            detail::write_double(out, v.x);
            out << ' ';
            detail::write_double(out, v.y);
            out << ' ';
            detail::write_double(out, v.z);
            out << '\n';
        }
        for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline void save_mesh(const TriangleMesh& mesh, const std::string& path) {
    save_mesh(mesh, path, mesh_format_from_path(path));
}

inline TriangleMesh load_mesh(const std::string& path, MeshFormat format) {
    TriangleMesh mesh;
    if (format == MeshFormat::obj) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open '" + path + "'");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto toks = detail::split_ws(line);
            if (toks.empty() || toks[0][0] == '#') continue;
            if (toks[0] == "v") {
                if (toks.size() < 4) throw detail::parse_error(path, lineno, "vertex needs 3 coordinates");
                Vec3d v;
                for (int k = 0; k < 3; ++k) {
                    if (!detail::parse_double(toks[static_cast<std::size_t>(k + 1)], v[static_cast<std::size_t>(k)]))
                        throw detail::parse_error(path, lineno, "bad number '" + toks[static_cast<std::size_t>(k + 1)] + "'");
                }
                mesh.vertices.push_back(v);
            } else if (toks[0] == "f") {
                if (toks.size() < 4) throw detail::parse_error(path, lineno, "face needs at least 3 vertices");
                std::vector<int> idx;
                for (std::size_t k = 1; k < toks.size(); ++k) {
                    std::string head = toks[k].substr(0, toks[k].find('/'));
                    int v;
                    try {
                        v = std::stoi(head);
                    } catch (...) {
                        throw detail::parse_error(path, lineno, "bad face index '" + toks[k] + "'");
                    }
                    // OBJ is 1-based; negative counts back from the end.
                    if (v < 0)
                        v = static_cast<int>(mesh.vertices.size()) + v;
                    else
                        v -= 1;
                    idx.push_back(v);
                }
                for (std::size_t k = 2; k < idx.size(); ++k)
                    mesh.triangles.push_back({idx[0], idx[k - 1], idx[k]});
            }
        }
    } else {
        auto contents = detail::read_ply(path);
        mesh.vertices = std::move(contents.vertices);
        mesh.triangles = std::move(contents.faces);
    }
    mesh.validate();
    return mesh;
}

inline TriangleMesh load_mesh(const std::string& path) {
    return load_mesh(path, mesh_format_from_path(path));
}

// A .ply providing only vertices is a point cloud; with faces it is a mesh.
inline bool ply_has_faces(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    const auto header = detail::read_ply_header(in, path);
    for (const auto& el : header.elements)
        if (el.name == "face" && el.count > 0) return true;
    return false;
}

}  // namespace ngp
