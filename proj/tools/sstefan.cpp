// Command-line front end: mesh-info, diagnostics, run, convergence, mushy,
// plus generate-meshes and convert-mesh helpers.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sstefan/config.hpp"
#include "sstefan/discretisations.hpp"
#include "sstefan/experiments.hpp"
#include "sstefan/gdm.hpp"
#include "sstefan/mesh.hpp"
#include "sstefan/mesh_families.hpp"
#include "sstefan/noise.hpp"
#include "sstefan/output.hpp"
#include "sstefan/stepper.hpp"

namespace fs = std::filesystem;
using namespace sstefan;

namespace {

enum Exit { Ok = 0, ConfigFailure = 1, NumericalFailure = 2 };

// Flags that map onto config keys. Unset flags leave the file value alone.
struct CommonOptions {
  std::string config_file;
  std::vector<std::string> set;
  std::vector<std::string> meshes;
  std::map<std::string, std::string> keys;

  void attach(CLI::App* sub, bool positional_meshes) {
    sub->add_option("-c,--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", set, "extra key=value assignment (repeatable)");
    if (positional_meshes)
      sub->add_option("meshes", meshes, "family ids (mesh1-03, hexa1-02) or mesh files");
    else
      sub->add_option("-m,--mesh", meshes, "family id or mesh file (repeatable, coarse to fine)");
    for (const auto& [flag, key, help] : flags()) sub->add_option(flag, keys[key], help);
  }

  static std::vector<std::tuple<std::string, std::string, std::string>> flags() {
    return {{"--seed", "seed", "master seed of the noise"},
            {"--test", "test", "1 or 2"},
            {"--scheme", "scheme", "mlp1 or hmm"},
            {"--family", "family", "mesh1 or hexa1"},
            {"--levels", "levels", "family levels, e.g. 1-4"},
            {"--reference", "reference", "reference mesh, 'exact' or 'none'"},
            {"--r", "r", "HMM stabilisation"},
            {"--nf", "nf", "noise factor list, e.g. 1,1000"},
            {"--paths", "paths", "Monte Carlo paths"},
            {"--path", "path", "path index for single runs"},
            {"--n-max", "n_max", "fine noise grid (power of two or auto)"},
            {"--output", "output", "output directory"},
            {"--workers", "workers", "worker threads"},
            {"--plateau", "plateau", "mushy interval lo,hi"},
            {"--plots", "plots", "emit gnuplot scripts (true/false)"},
            {"--merit", "merit", "Newton line-search merit: energy or residual"}};
  }

  RunConfig load(const std::string& subcommand) const {
    std::string text;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      std::ostringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    }
    ConfigOverrides ov;
    // Table order, so that e.g. --mesh after --family in the table wins.
    for (const auto& [flag, key, help] : flags())
      if (const auto it = keys.find(key); it != keys.end() && !it->second.empty()) ov.emplace_back(key, it->second);
    if (!meshes.empty()) {
      std::string joined;
      for (const auto& m : meshes) joined += (joined.empty() ? "" : ",") + m;
      ov.emplace_back("meshes", joined);
    }
    for (const auto& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ConfigError(ConfigError::Kind::InvalidValue, "--set expects key=value, got '" + kv + "'");
      ov.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    RunConfig c = parse_config(text, ov);
    c.subcommand = subcommand;
    return c;
  }
};

StefanModel configured_model(const RunConfig& c, double nf) {
  StefanModel m = make_test(c.test, nf);
  m.final_time = c.final_time;
  m.diffusion = c.lambda;
  if (c.plateau) m.mushy_interval = *c.plateau;
  return m;
}

bool all_triangular(const RunConfig& c) {
  for (const auto& m : c.meshes)
    if (!resolve_mesh(m).mesh->is_triangulation()) return false;
  if (c.reference && !resolve_mesh(*c.reference).mesh->is_triangulation()) return false;
  return true;
}

fs::path nf_directory(const RunConfig& c, double nf) {
  return c.nf.size() > 1 ? fs::path(c.output) / ("nf" + nf_label(nf)) : fs::path(c.output);
}

int cmd_mesh_info(const RunConfig& c) {
  std::printf("%-12s %10s %10s %10s %12s\n", "Mesh", "Size", "Nb.Cells", "Nb.Edges", "Nb.Vertices");
  for (const auto& src : c.meshes) {
    const auto level = resolve_mesh(src);
    const auto& m = *level.mesh;
    std::printf("%-12s %10.6f %10zu %10zu %12zu\n", level.label.c_str(), m.max_cell_diameter(), m.num_cells(),
                m.num_edges(), m.num_vertices());
  }
  return Ok;
}

int cmd_diagnostics(const RunConfig& c) {
  Table t{{"h", "ndofs", "rho", "S_D", "W_D"}, {}};
  std::printf("%-12s %-5s %12s %8s %14s %14s %14s\n", "mesh", "gd", "h", "ndofs", "rho", "S_D", "W_D");
  for (const auto& src : c.meshes) {
    const auto level = resolve_mesh(src);
    const auto gd = build_gd(c.scheme, level.mesh, c.r);
    const auto rho = coercivity_constant(gd);
    if (!rho.converged) throw std::runtime_error("coercivity power iteration did not converge on " + level.label);
    const double h = level.mesh->max_cell_diameter();
    const double s = s_defect(gd, sine_bump()), w = w_defect(gd, sine_swirl());
    std::printf("%-12s %-5s %12.6g %8d %14.8g %14.8g %14.8g\n", level.label.c_str(), to_string(c.scheme), h,
                table_ndofs(gd), rho.rho, s, w);
    t.rows.push_back({h, static_cast<double>(table_ndofs(gd)), rho.rho, s, w});
  }
  detail::prepare_directory(c.output);
  const auto file = detail::write_text(c.output, std::string("diagnostics_") + to_string(c.scheme) + ".dat", t.str());
  std::printf("wrote %s\n", file.string().c_str());
  return Ok;
}

int cmd_run(const RunConfig& c) {
  if (c.meshes.size() != 1) throw ConfigError(ConfigError::Kind::InvalidValue, "run takes exactly one mesh");
  if (c.nf.size() != 1) throw ConfigError(ConfigError::Kind::InvalidValue, "run takes exactly one nf value");
  const auto level = resolve_mesh(c.meshes.front());
  const auto model = configured_model(c, c.nf.front());
  auto gd = std::make_shared<const GradientDiscretisation>(build_gd(c.scheme, level.mesh, c.r));
  const SparseMatrix A = assemble_stiffness(*gd, DiffusionTensor(level.mesh->num_cells(), c.lambda));
  const std::size_t steps = steps_for_mesh_size(level.mesh->max_cell_diameter(), c.final_time);
  const std::size_t modes = c.q_modes ? c.q_modes : 1;

  BrownianDriver driver = c.noise_load ? BrownianDriver::load(*c.noise_load, c.path, c.final_time)
                                       : BrownianDriver::generate(c.seed, c.path, c.n_max ? c.n_max : steps,
                                                                  c.final_time, modes);
  if (driver.n_max() % steps != 0)
    throw ConfigError(ConfigError::Kind::InvalidValue, "noise grid N_max = " + std::to_string(driver.n_max()) +
                                                           " does not refine " + std::to_string(steps) + " steps");
  if (driver.num_modes() < modes)
    throw ConfigError(ConfigError::Kind::InvalidValue, "noise file carries fewer modes than q_modes");
  if (c.noise_save) driver.save(*c.noise_save);

  const Stepper stepper(gd, A, model, c.newton);
  std::optional<QWienerSpec> q;
  if (c.q_modes) q = QWienerSpec::geometric(c.q_modes, c.q_decay);

  std::ostringstream csv;
  csv << "t,energy,mushy_area,newton_its,relaxations\n";
  const StepObserver observer = [&](const SchemeState& s) {
    csv << format_number(s.time) << "," << format_number(discrete_energy(*gd, model, s.u)) << ","
        << format_number(mushy_area(*gd, s.u, model.mushy_interval)) << "," << s.newton_iterations << ","
        << s.relaxations << "\n";
  };
  const auto summary = run_path(stepper, driver, steps, {observer}, q ? &*q : nullptr);

  detail::prepare_directory(c.output);
  const std::string name = "run_" + level.label + "_" + to_string(c.scheme) + "_nf" + nf_label(c.nf.front()) +
                           "_path" + std::to_string(c.path) + ".csv";
  const auto file = detail::write_text(c.output, name, csv.str());
  std::printf("mesh %s scheme %s test %d nf %s path %u\n", level.label.c_str(), to_string(c.scheme), c.test,
              nf_label(c.nf.front()).c_str(), c.path);
  std::printf("steps %zu mean_newton %.4f max_newton %d relaxations %ld cap_hits %ld sup_energy %.10g\n",
              summary.steps, summary.mean_newton_iterations(), summary.max_newton_iterations, summary.relaxations,
              summary.cap_hits, summary.max_energy);
  std::printf("wrote %s\n", file.string().c_str());
  return Ok;
}

void print_level_rows(const ExperimentReport& rep) {
  std::printf("%-10s %10s %7s %6s %12s %12s %12s %8s %5s %6s %5s %10s\n", "level", "h", "ndofs", "steps", "E_zeta",
              "E_grad", "E_xi", "newton", "max", "relax", "caps", "sup_Xi");
  auto row = [](const LevelReport& l) {
    const auto e = l.errors.value_or(ErrorTriple{});
    std::printf("%-10s %10.6g %7d %6zu %12.6g %12.6g %12.6g %8.3f %5d %6ld %5ld %10.6g\n", l.label.c_str(), l.h,
                l.ndofs, l.steps, e.zeta, e.grad, e.xi, l.mean_newton, l.max_newton, l.relaxations, l.cap_hits,
                l.mean_sup_energy);
  };
  for (const auto& l : rep.levels) row(l);
  if (rep.reference) row(*rep.reference);
}

int cmd_convergence(const RunConfig& c) {
  if (!c.reference && !c.exact_reference)
    throw ConfigError(ConfigError::Kind::InvalidValue, "convergence needs 'reference' (a finer mesh or 'exact')");
  const bool tri = all_triangular(c);
  for (double nf : c.nf) {
    const auto rep = run_ensemble(ensemble_spec(c, nf));
    const auto dir = nf_directory(c, nf);
    std::printf("test %d scheme %s nf %s paths %zu reference %s\n", c.test, to_string(c.scheme), nf_label(nf).c_str(),
                c.paths, c.exact_reference ? "exact" : c.reference->c_str());
    print_level_rows(rep);
    if (rep.levels.size() >= 2) {
      std::vector<double> h, ez, eg, ex;
      for (const auto& l : rep.levels) {
        h.push_back(l.h);
        ez.push_back(l.errors->zeta);
        eg.push_back(l.errors->grad);
        ex.push_back(l.errors->xi);
      }
      std::printf("slopes E_zeta %.4f E_grad %.4f E_xi %.4f\n", loglog_slope(h, ez), loglog_slope(h, eg),
                  loglog_slope(h, ex));
    }
    for (const auto& f : emit_tables(rep, tri, dir)) std::printf("wrote %s\n", f.string().c_str());
    if (c.plots)
      for (const auto& f : emit_plots(rep, tri, dir)) std::printf("wrote %s\n", f.string().c_str());
  }
  return Ok;
}

int cmd_mushy(const RunConfig& c) {
  if (c.paths < 2) throw ConfigError(ConfigError::Kind::InvalidValue, "mushy statistics need paths >= 2");
  std::vector<ExperimentReport> reports;
  for (double nf : c.nf) {
    auto spec = ensemble_spec(c, nf);
    spec.reference.reset();
    spec.exact_reference = false;
    spec.record_mushy = true;
    reports.push_back(run_ensemble(spec));
  }
  const double t0 = 0.2 * c.final_time, t1 = c.final_time;
  std::printf("%-10s %10s %10s %14s %14s %8s %6s\n", "level", "h", "nf", "avg_Exp_MR", "avg_SD_MR", "newton", "relax");
  for (const auto& rep : reports)
    for (const auto& l : rep.levels)
      std::printf("%-10s %10.6g %10s %14.8g %14.8g %8.3f %6ld\n", l.label.c_str(), l.h, nf_label(rep.nf).c_str(),
                  time_average(l.mushy->times, l.mushy->mean, t0, t1), time_average(l.mushy->times, l.mushy->sd, t0, t1),
                  l.mean_newton, l.relaxations);
  for (const auto& f : emit_mushy_tables(reports, c.output)) std::printf("wrote %s\n", f.string().c_str());
  if (c.plots)
    for (const auto& f : emit_mushy_plots(reports, c.output)) std::printf("wrote %s\n", f.string().c_str());
  return Ok;
}

int cmd_generate_meshes(const fs::path& dir) {
  detail::prepare_directory(dir);
  auto emit = [&](const std::string& family, std::size_t count, MeshFormat fmt, const char* ext) {
    for (std::size_t l = 1; l <= count; ++l) {
      const auto id = family_id(family, static_cast<int>(l));
      const auto mesh = make_family_mesh(*parse_family_id(id));
      std::ostringstream text;
      write_mesh(text, mesh, fmt);
      std::printf("wrote %s\n", detail::write_text(dir, id + ext, text.str()).string().c_str());
    }
  };
  emit("mesh1", mesh1_resolutions().size(), MeshFormat::TriangleList, ".tri");
  emit("hexa1", hexa1_resolutions().size(), MeshFormat::PolygonList, ".poly");
  return Ok;
}

int cmd_convert_mesh(const fs::path& in_path, const fs::path& out_path) {
  std::ifstream in(in_path);
  if (!in) throw MeshError(MeshError::Kind::Parse, in_path.string() + ": cannot open");
  const auto mesh = read_typ1(in, in_path.string());
  std::ostringstream text;
  const auto fmt = out_path.extension() == ".tri" ? MeshFormat::TriangleList : MeshFormat::PolygonList;
  write_mesh(text, mesh, fmt);
  std::ofstream out(out_path);
  if (!(out << text.str())) throw OutputError(out_path.string() + ": cannot write");
  std::printf("%s: %zu cells, %zu edges, %zu vertices\n", out_path.string().c_str(), mesh.num_cells(),
              mesh.num_edges(), mesh.num_vertices());
  return Ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-scheme solver for the stochastic Stefan problem"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* app;
    CommonOptions opts;
  };
  std::map<std::string, Sub> subs;
  const std::vector<std::pair<std::string, std::string>> names = {
      {"mesh-info", "mesh sizes and cell/edge/vertex counts"},
      {"diagnostics", "coercivity constant and consistency / conformity defects"},
      {"run", "one path on one mesh; per-step CSV"},
      {"convergence", "Monte Carlo error study against a finer mesh or the exact solution"},
      {"mushy", "mushy-region statistics for a list of noise factors"}};
  for (const auto& [name, help] : names) {
    auto& s = subs[name];
    s.app = app.add_subcommand(name, help);
    s.opts.attach(s.app, name == "mesh-info" || name == "diagnostics");
  }

  std::string mesh_dir = "data/meshes";
  auto* gen = app.add_subcommand("generate-meshes", "write the mesh1 and hexa1 families as mesh files");
  gen->add_option("dir", mesh_dir, "output directory");
  std::string convert_in, convert_out;
  auto* conv = app.add_subcommand("convert-mesh", "convert a typ1 mesh file (.tri or .poly output)");
  conv->add_option("input", convert_in)->required()->check(CLI::ExistingFile);
  conv->add_option("output", convert_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? Ok : ConfigFailure;
  }

  try {
    if (gen->parsed()) return cmd_generate_meshes(mesh_dir);
    if (conv->parsed()) return cmd_convert_mesh(convert_in, convert_out);
    for (auto& [name, s] : subs) {
      if (!s.app->parsed()) continue;
      const RunConfig c = s.opts.load(name);
      if (name == "mesh-info") return cmd_mesh_info(c);
      if (name == "diagnostics") return cmd_diagnostics(c);
      if (name == "run") return cmd_run(c);
      if (name == "convergence") return cmd_convergence(c);
      if (name == "mushy") return cmd_mushy(c);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return ConfigFailure;
  } catch (const MeshError& e) {
    std::fprintf(stderr, "mesh error: %s\n", e.what());
    return ConfigFailure;
  } catch (const OutputError& e) {
    std::fprintf(stderr, "output error: %s\n", e.what());
    return ConfigFailure;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return ConfigFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return NumericalFailure;
  }
  return Ok;
}
