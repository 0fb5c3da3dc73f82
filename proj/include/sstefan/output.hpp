#pragma once

// Whitespace-separated .dat tables with named columns (pgfplots/gnuplot
// "columnheader" style) and gnuplot scripts that draw them.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "experiments.hpp"

namespace sstefan {

class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// "1", "1000", "0.5": the nf label used in column and file names.
inline std::string nf_label(double nf) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.15g", nf);
  return buf;
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::string str() const {
    std::ostringstream out;
    for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? " " : "") << columns[j];
    out << "\n";
    for (const auto& row : rows) {
      for (std::size_t j = 0; j < row.size(); ++j) out << (j ? " " : "") << format_number(row[j]);
      out << "\n";
    }
    return out.str();
  }
};

inline Table parse_table(const std::string& text) {
  std::istringstream in(text);
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw OutputError("empty table");
  std::istringstream head(line);
  for (std::string c; head >> c;) t.columns.push_back(c);
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    for (std::string tok; ls >> tok;) row.push_back(std::stod(tok));
    if (row.empty()) continue;
    if (row.size() != t.columns.size()) throw OutputError("table row has " + std::to_string(row.size()) + " fields");
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Column prefix and file stem: PT/p1 for MLP1, HT/ht for HMM on triangles,
/// HH/hh for HMM on other polygons; Test-1 files carry an "e1" prefix.
struct TableNaming {
  std::string prefix, stem;
};

inline TableNaming table_naming(Scheme scheme, bool triangular) {
  if (scheme == Scheme::Mlp1) return {"PT", "p1"};
  return triangular ? TableNaming{"HT", "ht"} : TableNaming{"HH", "hh"};
}

inline std::string errors_file_name(int test, Scheme scheme, bool triangular) {
  const auto n = table_naming(scheme, triangular);
  // "p1error" is singular, "hterrors"/"hherrors" plural.
  return (test == 1 ? "e1" : "") + n.stem + (scheme == Scheme::Mlp1 ? "error.dat" : "errors.dat");
}

inline std::string values_file_name(int test, Scheme scheme, bool triangular) {
  return (test == 1 ? "e1" : "") + table_naming(scheme, triangular).stem + "values.dat";
}

inline std::string newton_file_name(int test, Scheme scheme, bool triangular) {
  return (test == 1 ? "e1" : "") + table_naming(scheme, triangular).stem + "newton.dat";
}

inline std::string mushy_file_name(const std::string& mesh_label) { return "mushy_" + mesh_label + ".dat"; }

/// Rows for the coarse levels (errors) and all levels including the reference (values).
inline Table errors_table(const ExperimentReport& rep, bool triangular) {
  const auto p = table_naming(rep.scheme, triangular).prefix;
  Table t{{"h", "ndofs", p + "_EL2z", p + "_EH1z", p + "_EL1Xi"}, {}};
  for (const auto& l : rep.levels) {
    if (!l.errors) continue;
    t.rows.push_back({l.h, static_cast<double>(l.ndofs), l.errors->zeta, l.errors->grad, l.errors->xi});
  }
  return t;
}

inline Table values_table(const ExperimentReport& rep, bool triangular) {
  const auto p = table_naming(rep.scheme, triangular).prefix;
  Table t{{"h", "ndofs", p + "_L2z", p + "_H1z", p + "_L1Xi"}, {}};
  auto add = [&t](const LevelReport& l) {
    t.rows.push_back({l.h, static_cast<double>(l.ndofs), l.l2_zeta, l.h1_zeta, l.l1_xi});
  };
  for (const auto& l : rep.levels) add(l);
  if (rep.reference) add(*rep.reference);
  return t;
}

inline Table newton_table(const ExperimentReport& rep) {
  Table t{{"h", "ndofs", "steps", "mean_newton", "max_newton", "relaxations", "cap_hits", "mean_sup_energy"}, {}};
  auto add = [&t](const LevelReport& l) {
    t.rows.push_back({l.h, static_cast<double>(l.ndofs), static_cast<double>(l.steps), l.mean_newton,
                      static_cast<double>(l.max_newton), static_cast<double>(l.relaxations),
                      static_cast<double>(l.cap_hits), l.mean_sup_energy});
  };
  for (const auto& l : rep.levels) add(l);
  if (rep.reference) add(*rep.reference);
  return t;
}

/// One mushy table per mesh level: idt, then nf<k>_Exp, nf<k>_SD per report.
/// Every report must carry the same levels (same time grids).
inline std::map<std::string, Table> mushy_tables(const std::vector<ExperimentReport>& reports) {
  std::map<std::string, Table> out;
  if (reports.empty()) return out;
  for (std::size_t k = 0; k < reports.front().levels.size(); ++k) {
    const auto& label = reports.front().levels[k].label;
    Table t;
    t.columns.push_back("idt");
    const MushySeries* first = nullptr;
    for (const auto& rep : reports) {
      if (rep.levels.size() != reports.front().levels.size() || rep.levels[k].label != label || !rep.levels[k].mushy)
        throw OutputError("mushy reports do not share the level " + label);
      const auto nf = nf_label(rep.nf);
      t.columns.push_back("nf" + nf + "_Exp");
      t.columns.push_back("nf" + nf + "_SD");
      if (!first) first = &*rep.levels[k].mushy;
      if (rep.levels[k].mushy->times != first->times) throw OutputError("mushy time grids differ on " + label);
    }
    for (std::size_t n = 0; n < first->times.size(); ++n) {
      std::vector<double> row{first->times[n]};
      for (const auto& rep : reports) {
        row.push_back(rep.levels[k].mushy->mean[n]);
        row.push_back(rep.levels[k].mushy->sd[n]);
      }
      t.rows.push_back(std::move(row));
    }
    out.emplace(mushy_file_name(label), std::move(t));
  }
  return out;
}

namespace detail {

inline void prepare_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw OutputError(dir.string() + ": cannot create output directory" + (ec ? " (" + ec.message() + ")" : ""));
}

inline std::filesystem::path write_text(const std::filesystem::path& dir, const std::string& name,
                                        const std::string& text) {
  const auto path = dir / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw OutputError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw OutputError(path.string() + ": write failed");
  return path;
}

}  // namespace detail

/// Writes the errors (when the report has errors), values and Newton tables.
/// `triangular` selects the HT/HH naming for HMM.
inline std::vector<std::filesystem::path> emit_tables(const ExperimentReport& rep, bool triangular,
                                                      const std::filesystem::path& dir) {
  if (rep.levels.empty()) throw OutputError("empty report: nothing to write");
  detail::prepare_directory(dir);
  std::vector<std::filesystem::path> written;
  const auto errors = errors_table(rep, triangular);
  if (!errors.rows.empty())
    written.push_back(detail::write_text(dir, errors_file_name(rep.test, rep.scheme, triangular), errors.str()));
  written.push_back(
      detail::write_text(dir, values_file_name(rep.test, rep.scheme, triangular), values_table(rep, triangular).str()));
  written.push_back(detail::write_text(dir, newton_file_name(rep.test, rep.scheme, triangular), newton_table(rep).str()));
  return written;
}

inline std::vector<std::filesystem::path> emit_mushy_tables(const std::vector<ExperimentReport>& reports,
                                                            const std::filesystem::path& dir) {
  const auto tables = mushy_tables(reports);
  if (tables.empty()) throw OutputError("empty report: nothing to write");
  detail::prepare_directory(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [name, t] : tables) written.push_back(detail::write_text(dir, name, t.str()));
  return written;
}

namespace detail {

inline std::string gnuplot_header(const std::string& output, const std::string& xlabel, const std::string& ylabel,
                                  bool loglog) {
  std::ostringstream s;
  s << "set terminal pdfcairo size 4in,3in\n"
    << "set output '" << output << "'\n"
    << "set key top left\n"
    << "set xlabel '" << xlabel << "'\n"
    << "set ylabel '" << ylabel << "'\n";
  if (loglog) s << "set logscale xy\nset format xy '%g'\n";
  return s.str();
}

/// Slope-1 triangle anchored at the finest point of the first curve.
inline std::string slope_triangle(double h, double e) {
  const double h0 = h, h1 = 1.6 * h, e0 = 0.6 * e, e1 = e0 * (h1 / h0);
  std::ostringstream s;
  s.precision(17);
  s << "set object 1 polygon from " << h0 << "," << e0 << " to " << h1 << "," << e0 << " to " << h1 << "," << e1
    << " to " << h0 << "," << e0 << " fs empty border lc rgb 'black'\n"
    << "set label 1 '1' at " << 1.65 * h << "," << std::sqrt(e0 * e1) << "\n";
  return s.str();
}

}  // namespace detail

/// Gnuplot scripts: errors vs h (with a slope-1 triangle), errors vs ndofs,
/// norm values vs h. Returns the script paths.
inline std::vector<std::filesystem::path> emit_plots(const ExperimentReport& rep, bool triangular,
                                                     const std::filesystem::path& dir) {
  if (rep.levels.empty()) throw OutputError("empty report: nothing to plot");
  detail::prepare_directory(dir);
  const auto naming = table_naming(rep.scheme, triangular);
  const std::string p = naming.prefix;
  const std::string stem = (rep.test == 1 ? "e1" : "") + naming.stem;
  std::vector<std::filesystem::path> written;

  const auto errors = errors_table(rep, triangular);
  if (!errors.rows.empty()) {
    const auto file = errors_file_name(rep.test, rep.scheme, triangular);
    const auto& last = errors.rows.back();
    struct Panel {
      const char* column;
      const char* title;
    };
    const Panel panels[] = {{"_EL2z", "E_{Pi zeta}"}, {"_EH1z", "E_{grad zeta}"}, {"_EL1Xi", "E_{Pi Xi}"}};
    std::ostringstream vs_h, vs_n;
    vs_h << detail::gnuplot_header(stem + "_errors_h.pdf", "h", "Errors", true);
    vs_n << detail::gnuplot_header(stem + "_errors_ndofs.pdf", "ndofs", "Errors", true);
    vs_h << detail::slope_triangle(last[0], std::min({last[2], last[3], last[4]}));
    vs_h << "plot ";
    vs_n << "plot ";
    for (int k = 0; k < 3; ++k) {
      const std::string sep = k ? ", \\\n     " : "";
      vs_h << sep << "'" << file << "' using 'h':'" << p << panels[k].column << "' with linespoints title '"
           << panels[k].title << "'";
      vs_n << sep << "'" << file << "' using 'ndofs':'" << p << panels[k].column << "' with linespoints title '"
           << panels[k].title << "'";
    }
    vs_h << "\n";
    vs_n << "\n";
    written.push_back(detail::write_text(dir, stem + "_errors_h.gp", vs_h.str()));
    written.push_back(detail::write_text(dir, stem + "_errors_ndofs.gp", vs_n.str()));
  }

  const auto vfile = values_file_name(rep.test, rep.scheme, triangular);
  std::ostringstream values;
  values << detail::gnuplot_header(stem + "_values.pdf", "h", "Values", false) << "set logscale x\n"
         << "plot '" << vfile << "' using 'h':'" << p << "_L2z' with linespoints title 'L2 zeta', \\\n"
         << "     '" << vfile << "' using 'h':'" << p << "_H1z' with linespoints title 'H1 zeta', \\\n"
         << "     '" << vfile << "' using 'h':'" << p << "_L1Xi' with linespoints title 'L1 Xi'\n";
  written.push_back(detail::write_text(dir, stem + "_values.gp", values.str()));
  return written;
}

/// One script per mesh: Exp-MR and SD-MR against t for every nf.
inline std::vector<std::filesystem::path> emit_mushy_plots(const std::vector<ExperimentReport>& reports,
                                                           const std::filesystem::path& dir) {
  const auto tables = mushy_tables(reports);
  if (tables.empty()) throw OutputError("empty report: nothing to plot");
  detail::prepare_directory(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [name, t] : tables) {
    const std::string base = name.substr(0, name.size() - 4);
    for (const char* stat : {"Exp", "SD"}) {
      std::ostringstream s;
      s << detail::gnuplot_header(base + "_" + stat + ".pdf", "t", std::string(stat) + "-MR", false) << "plot ";
      bool first = true;
      for (const auto& rep : reports) {
        const auto nf = nf_label(rep.nf);
        s << (first ? "" : ", \\\n     ") << "'" << name << "' using 'idt':'nf" << nf << "_" << stat
          << "' with lines title 'nf = " << nf << "'";
        first = false;
      }
      s << "\n";
      written.push_back(detail::write_text(dir, base + "_" + stat + ".gp", s.str()));
    }
  }
  return written;
}

}  // namespace sstefan
