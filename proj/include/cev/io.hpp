#pragma once

#include "cev/diagnostics.hpp"
#include "cev/errors.hpp"
#include "cev/mesh.hpp"
#include "cev/spaces.hpp"

#include <Eigen/Core>

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace cev {

inline constexpr const char* kDiagnosticsHeader = "t,MD,TMD,EVD,VD,KE,CKE,VD_total,residual";

/// One CSV row per completed step; `residual` is the relative energy-equality
/// residual of the step.
inline void write_diagnostics_csv(std::ostream& out, const std::vector<DiagnosticsRecord>& records) {
  out << kDiagnosticsHeader << '\n' << std::setprecision(17);
  for (const auto& r : records)
    out << r.t << ',' << r.MD << ',' << r.TMD << ',' << r.EVD << ',' << r.VD << ',' << r.KE << ',' << r.CKE << ','
        << r.VD_total() << ',' << r.relative_residual() << '\n';
}

/// Rows of a diagnostics CSV, columns in header order.
inline std::vector<std::vector<double>> read_diagnostics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kDiagnosticsHeader) throw ParseError("unexpected diagnostics header", line_no);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) {
      std::size_t used = 0;
      try {
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw ParseError("bad number '" + cell + "'", line_no);
      }
      if (used != cell.size()) throw ParseError("bad number '" + cell + "'", line_no);
    }
    if (row.size() != 9) throw ParseError("expected 9 columns", line_no);
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Coefficients of the fields stored at one time level.
struct Snapshot {
  long step = 0;
  double t = 0.0;
  std::size_t num_vertices = 0;
  std::size_t num_triangles = 0;
  std::vector<std::pair<SpaceTag, Eigen::VectorXd>> fields;
};

/// Plain-text snapshot:
///   cev-snapshot 1
///   vertices <nv> triangles <nt>
///   step <n> t <t>
///   field velocity|pressure <count>
///   <count coefficients, one per line, 17 significant digits>
///   ...
inline void write_snapshot(std::ostream& out, long step, double t, const std::vector<const FeFunction*>& fields) {
  if (fields.empty()) throw std::invalid_argument("write_snapshot: no fields");
  const Mesh& mesh = fields.front()->space->mesh();
  out << "cev-snapshot 1\n";
  out << "vertices " << mesh.num_vertices() << " triangles " << mesh.num_triangles() << '\n';
  out << std::setprecision(17) << "step " << step << " t " << t << '\n';
  for (const FeFunction* f : fields) {
    if (&f->space->mesh() != &mesh) throw std::invalid_argument("write_snapshot: fields on different meshes");
    out << "field " << (f->tag == SpaceTag::velocity ? "velocity" : "pressure") << ' ' << f->coeffs.size() << '\n';
    for (Eigen::Index i = 0; i < f->coeffs.size(); ++i) out << f->coeffs[i] << '\n';
  }
}

inline Snapshot read_snapshot(const std::string& text) {
  detail::LineReader r(text);
  std::string line, word;
  Snapshot s;
  if (!r.next(line) || line != "cev-snapshot 1") throw ParseError("not a snapshot file", r.line_no);
  std::string w1, w2;
  if (!r.next(line)) throw ParseError("missing mesh counts", r.line_no);
  detail::parse_fields(line, r.line_no, w1, s.num_vertices, w2, s.num_triangles);
  if (w1 != "vertices" || w2 != "triangles") throw ParseError("expected 'vertices N triangles M'", r.line_no);
  if (!r.next(line)) throw ParseError("missing step line", r.line_no);
  detail::parse_fields(line, r.line_no, w1, s.step, w2, s.t);
  if (w1 != "step" || w2 != "t") throw ParseError("expected 'step n t value'", r.line_no);
  while (r.next(line)) {
    std::string tag;
    long count = 0;
    detail::parse_fields(line, r.line_no, word, tag, count);
    if (word != "field" || (tag != "velocity" && tag != "pressure") || count < 0)
      throw ParseError("expected 'field velocity|pressure N'", r.line_no);
    Eigen::VectorXd c(count);
    for (long i = 0; i < count; ++i) {
      if (!r.next(line)) throw ParseError("truncated field '" + tag + "'", r.line_no);
      detail::parse_fields(line, r.line_no, c[i]);
    }
    s.fields.emplace_back(tag == "velocity" ? SpaceTag::velocity : SpaceTag::pressure, std::move(c));
  }
  if (s.fields.empty()) throw ParseError("snapshot holds no fields", r.line_no);
  return s;
}

/// Rebuild the stored field with tag `tag` on `sp`, checking the mesh counts.
inline FeFunction snapshot_field(const Snapshot& s, std::shared_ptr<const SpacePair> sp, SpaceTag tag) {
  if (s.num_vertices != sp->mesh().num_vertices() || s.num_triangles != sp->mesh().num_triangles())
    throw ValidationError("snapshot mesh counts do not match the space");
  for (const auto& [t, c] : s.fields)
    if (t == tag) return FeFunction(std::move(sp), tag, c);
  throw ValidationError("snapshot has no field of the requested kind");
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

} // namespace cev
