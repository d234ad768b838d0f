#include "core/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include "core/util.hpp"

namespace fibm {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

const char* library_version() { return "1.0.0"; }

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

Interval interval_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) fail(ErrorCode::Json, "interval must be [lo, hi]");
  Interval v{j[0].get<double>(), j[1].get<double>()};
  if (!(v.lo < v.hi)) fail(ErrorCode::Json, "interval endpoints out of order");
  return v;
}

DomainSpec domain_from_json(const json& j) {
  const std::string kind = j.value("kind", "box");
  if (kind == "torus") {
    std::vector<double> periods = j.at("periods").get<std::vector<double>>();
    return DomainSpec::torus(periods);
  }
  std::vector<std::array<double, 2>> bounds;
  for (const auto& b : j.at("bounds")) bounds.push_back({b[0].get<double>(), b[1].get<double>()});
  return DomainSpec::box(bounds);
}

struct ModelHandle {
  MatrixPolynomialFamily fam{1, 1};
  DomainSpec domain{};
  std::string id;
  std::shared_ptr<const ClosedFormModel> closed_form;
};

ModelHandle resolve_model(const PipelineConfig& cfg) {
  ModelHandle m;
  if (!cfg.model_id.empty()) {
    m.id = cfg.model_id;
    m.fam = builtin_family(cfg.model_id);
    m.domain = cfg.domain_set ? cfg.domain : builtin_domain(cfg.model_id);
    m.closed_form = std::make_shared<ClosedFormModel>(cfg.model_id == "example1" ? 1 : 2);
  } else {
    if (cfg.inline_model.is_null()) fail(ErrorCode::InvalidArgument, "config needs a model");
    m.id = "inline";
    m.fam = family_from_json(cfg.inline_model.dump());
    if (!cfg.domain_set) fail(ErrorCode::InvalidArgument, "inline models need a domain");
    m.domain = cfg.domain;
  }
  return m;
}

ordered_json interval_json(const Interval& v) { return ordered_json::array({v.lo, v.hi}); }

}  // namespace

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail(ErrorCode::Json, std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig cfg;
  if (j.contains("model")) {
    if (j["model"].is_string())
      cfg.model_id = j["model"].get<std::string>();
    else
      cfg.inline_model = j["model"];
  }
  if (j.contains("domain")) {
    cfg.domain = domain_from_json(j["domain"]);
    cfg.domain_set = true;
  }
  if (j.contains("resolutions")) {
    cfg.resolutions = j["resolutions"].get<std::vector<int>>();
    if (cfg.resolutions.empty()) fail(ErrorCode::Json, "resolutions must be nonempty");
    for (size_t i = 1; i < cfg.resolutions.size(); ++i)
      if (cfg.resolutions[i] <= cfg.resolutions[i - 1])
        fail(ErrorCode::Json, "resolutions must be ascending");
  }
  if (j.contains("interval")) cfg.I = interval_from_json(j["interval"]);
  if (j.contains("interval_wide")) cfg.Itilde = interval_from_json(j["interval_wide"]);
  if (!(cfg.I.lo >= cfg.Itilde.lo && cfg.I.hi <= cfg.Itilde.hi))
    fail(ErrorCode::Json, "interval must sit inside interval_wide");
  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    auto num_or_auto = [](const json& v) {
      if (v.is_string()) return 0.0;  // "auto"
      return v.get<double>();
    };
    if (t.contains("cluster_tol")) cfg.tol.cluster_tol = num_or_auto(t["cluster_tol"]);
    if (t.contains("grad_tol")) cfg.tol.grad_tol = num_or_auto(t["grad_tol"]);
    if (t.contains("comm_tol")) cfg.tol.comm_tol = t["comm_tol"].get<double>();
    if (t.contains("grad_floor")) cfg.tol.grad_floor = t["grad_floor"].get<double>();
    if (t.contains("lip_factor")) cfg.tol.lip_factor = t["lip_factor"].get<double>();
    if (cfg.tol.comm_tol <= 0 || cfg.tol.grad_floor <= 0 || cfg.tol.lip_factor <= 0)
      fail(ErrorCode::Json, "tolerances must be positive");
  }
  if (j.contains("modes")) {
    cfg.run_naive = false;
    cfg.run_modified = false;
    for (const auto& m : j["modes"]) {
      if (m == "naive") cfg.run_naive = true;
      else if (m == "modified") cfg.run_modified = true;
      else fail(ErrorCode::Json, "mode must be naive or modified");
    }
  }
  if (j.contains("scheme"))
    cfg.scheme = j["scheme"] == "central4" ? DiffScheme::Central4 : DiffScheme::Central2;
  if (j.contains("covering")) cfg.covering_mode = j["covering"].get<std::string>();
  if (j.contains("mourre")) {
    const json& m = j["mourre"];
    if (m.contains("window")) {
      cfg.mourre_window = interval_from_json(m["window"]);
      cfg.mourre_window_set = true;
    }
    if (m.contains("c_target")) cfg.mourre_c_target = m["c_target"].get<double>();
  }
  if (j.contains("ad_orders")) cfg.ad_orders = j["ad_orders"].get<int>();
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("embed_figure_data")) cfg.embed_figure_data = j["embed_figure_data"].get<bool>();
  return cfg;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::Io, "cannot read config file " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

PipelineConfig PipelineConfig::example_config(int id, bool quick) {
  PipelineConfig cfg;
  if (id == 1) {
    cfg.model_id = "example1";
    cfg.I = {0.95, 1.05};
    // wide outer interval: energy windows near band crossings need room,
    // and the ball radii scale with the room available
    cfg.Itilde = {0.45, 1.55};
    cfg.resolutions = quick ? std::vector<int>{161} : std::vector<int>{161, 193};
    cfg.ad_orders = quick ? 2 : 4;
  } else if (id == 2) {
    cfg.model_id = "example2";
    cfg.I = {-0.1, 0.1};
    cfg.Itilde = {-0.2, 0.2};
    cfg.resolutions = quick ? std::vector<int>{16, 32} : std::vector<int>{32, 64, 128};
    cfg.ad_orders = quick ? 2 : 4;
  } else {
    fail(ErrorCode::InvalidArgument, "example id must be 1 or 2");
  }
  return cfg;
}

ordered_json PipelineConfig::to_json() const {
  ordered_json j;
  if (!model_id.empty())
    j["model"] = model_id;
  else
    j["model"] = inline_model;
  if (domain_set) {
    ordered_json d;
    d["kind"] = domain.kind == DomainSpec::Kind::Box ? "box" : "torus";
    ordered_json b = ordered_json::array();
    for (int a = 0; a < domain.dim; ++a)
      b.push_back(ordered_json::array({domain.bounds[a][0], domain.bounds[a][1]}));
    d["bounds"] = b;
    j["domain"] = d;
  }
  j["resolutions"] = resolutions;
  j["interval"] = interval_json(I);
  j["interval_wide"] = interval_json(Itilde);
  j["tolerances"] = {{"cluster_tol", tol.cluster_tol}, {"grad_tol", tol.grad_tol},
                     {"comm_tol", tol.comm_tol},       {"grad_floor", tol.grad_floor},
                     {"lip_factor", tol.lip_factor}};
  ordered_json modes = ordered_json::array();
  if (run_naive) modes.push_back("naive");
  if (run_modified) modes.push_back("modified");
  j["modes"] = modes;
  j["scheme"] = scheme == DiffScheme::Central4 ? "central4" : "central2";
  j["covering"] = covering_mode;
  j["mourre"] = {{"window", mourre_window_set ? interval_json(mourre_window) : interval_json(I)},
                 {"c_target", mourre_c_target}};
  j["ad_orders"] = ad_orders;
  j["output_dir"] = output_dir;
  return j;
}

bool RunReport::all_passed() const {
  for (const auto& e : ledger)
    if (!e.pass) return false;
  return true;
}

std::string RunReport::to_text() const {
  std::string out;
  for (const auto& e : ledger) {
    out += e.pass ? "[PASS] " : "[FAIL] ";
    out += e.id + ": " + e.description + " (value " + std::to_string(e.value) +
           ", threshold " + std::to_string(e.threshold) + ")\n";
  }
  return out;
}

namespace {

struct StrataStage {
  GridPtr grid;
  SigmaSample sample;
  std::vector<Stratum> strata;
  ThresholdSet thresholds;
  double lip = 0.0;
  double cluster_tol = 0.0;
  double grad_tol = 0.0;
  double seconds = 0.0;
};

StrataStage run_strata_stage(const ModelHandle& model, const PipelineConfig& cfg, int n) {
  const double t0 = now_seconds();
  StrataStage st;
  st.grid = build_grid(model.domain, n);
  st.lip = estimate_eigenvalue_lipschitz(model.fam, *st.grid);
  const double h = st.grid->min_spacing();
  st.cluster_tol = cfg.tol.cluster_tol > 0 ? cfg.tol.cluster_tol
                                           : std::max(0.75 * st.lip * h, 1e-12);
  st.grad_tol = cfg.tol.grad_tol > 0 ? cfg.tol.grad_tol : 10.0 * h;
  st.sample = sample_sigma(model.fam, st.grid, cfg.Itilde, st.cluster_tol);
  st.strata = extract_strata(st.sample, cfg.tol.lip_factor * st.lip);
  st.thresholds = detect_thresholds(model.fam, st.sample, st.strata, st.grad_tol, st.lip);
  st.seconds = now_seconds() - t0;
  return st;
}

ordered_json strata_json(const StrataStage& st, bool embed) {
  ordered_json j;
  j["resolution"] = st.grid->nodes_per_axis();
  j["lipschitz_estimate"] = st.lip;
  j["cluster_tol"] = st.cluster_tol;
  j["grad_tol"] = st.grad_tol;
  j["num_sigma_points"] = st.sample.triples.size();
  j["num_strata"] = st.strata.size();
  ordered_json strata = ordered_json::array();
  for (const auto& s : st.strata) {
    strata.push_back({{"id", s.id},
                      {"multiplicity", s.multiplicity},
                      {"estimated_dim", s.estimated_dim},
                      {"rank_zero", s.rank_zero},
                      {"points", s.members.size()}});
  }
  j["strata"] = strata;
  ordered_json th = ordered_json::array();
  for (size_t i = 0; i < st.thresholds.values.size(); ++i) {
    ordered_json e;
    e["energy"] = st.thresholds.values[i];
    e["stratum"] = st.thresholds.stratum_ids[i];
    ordered_json pt = ordered_json::array();
    for (int a = 0; a < st.grid->dim(); ++a) pt.push_back(st.thresholds.points[i][a]);
    e["point"] = pt;
    th.push_back(e);
  }
  j["thresholds"] = th;
  j["seconds"] = st.seconds;
  if (embed) {
    ordered_json pts = ordered_json::array();
    for (const auto& s : st.strata)
      for (int m : s.members) {
        const SigmaTriple& t = st.sample.triples[static_cast<size_t>(m)];
        const Coord c = st.grid->coord(t.node);
        ordered_json row = ordered_json::array();
        for (int a = 0; a < st.grid->dim(); ++a) row.push_back(c[a]);
        row.push_back(t.lambda);
        row.push_back(t.multiplicity);
        row.push_back(s.id);
        pts.push_back(row);
      }
    j["sigma_points"] = pts;
  }
  return j;
}

struct ModeArtifacts {
  FirstOrderOperator generator;
  std::vector<CommutatorReport> ads;
  std::vector<double> matrix_norms;
  double antisym_defect = 0.0;
  double hermitian_defect = 0.0;
  double support_identity_defect = 0.0;
  MourreReport mourre;
  double cross_validate_ad1 = 0.0;
};

// chi cutoff of the covering as a fiber multiplication at one node
Matrix chi_of_h(const Covering& cov, const BumpSystem& bumps, const SpectralDecomposition& d) {
  // plateau over the union of windows; branch windows force a cutoff that
  // is 1 on the whole sampled range (their sheet sweeps every energy)
  double lo = 1e300, hi = -1e300;
  bool branch = false;
  for (const auto& w : cov.windows) {
    if (w.branch_mode) branch = true;
    else {
      lo = std::min(lo, w.J.lo);
      hi = std::max(hi, w.J.hi);
    }
  }
  const int mu = d.fiber_dim();
  Matrix out = Matrix::Zero(mu, mu);
  for (size_t c = 0; c < d.clusters.size(); ++c) {
    double v;
    if (branch) {
      v = 1.0;  // wide plateau
    } else {
      v = 0.0;
      for (size_t wi = 0; wi < cov.windows.size(); ++wi)
        v = std::max(v, bumps.chi(static_cast<int>(wi), d.clusters[c].mean));
      // windows may overlap between regions; the cutoff is the max plateau
    }
    out += v * d.projectors[c];
  }
  return out;
}

double support_identity_defect(const Covering& cov, const BumpSystem& bumps,
                               const SpectralFieldData& spec, const FirstOrderOperator& op) {
  double defect = 0.0;
  for (std::int64_t node = 0; node < op.grid->num_nodes(); ++node) {
    const Matrix chi = chi_of_h(cov, bumps, spec.at(node));
    const int mu = op.fiber_dim;
    const Matrix one = Matrix::Identity(mu, mu);
    for (int a = 0; a <= op.grid->dim(); ++a) {
      const Matrix& coef =
          a < op.grid->dim() ? op.principal[static_cast<size_t>(a)].at(node) : op.zeroth.at(node);
      defect = std::max(defect, spectral_norm((one - chi) * coef));
      defect = std::max(defect, spectral_norm(coef * (one - chi)));
    }
  }
  return defect;
}

struct ResolutionStage {
  GridPtr grid;
  MatrixField h;
  std::vector<MatrixField> dh;
  SpectralFieldPtr spec;
  Covering covering;
  PartitionReport partition;
  IncidenceData incidence;
  double min_escape_positivity = 1e30;
  double glue_annihilation_defect = 0.0;
  double theta_defect = 0.0;
  ModeArtifacts naive, modified;
  double seconds = 0.0;
};

ResolutionStage run_resolution(const ModelHandle& model, const PipelineConfig& cfg,
                               const StrataStage& strata_fine, int n) {
  const double t0 = now_seconds();
  ResolutionStage rs;
  rs.grid = build_grid(model.domain, n);
  rs.h = sample_family(model.fam, rs.grid);
  for (int a = 0; a < rs.grid->dim(); ++a)
    rs.dh.push_back(sample_family(model.fam.derivative(a), rs.grid));
  rs.spec = build_spectral_field(rs.h, kDefaultClusterTol);

  // threshold guard on the wide interval
  for (double tau : strata_fine.thresholds.values)
    if (cfg.Itilde.contains(tau))
      fail(ErrorCode::ThresholdInInterval,
           "threshold at energy " + std::to_string(tau) + " inside the working interval");

  // covering
  const bool analytic = cfg.covering_mode == "analytic" ||
                        (cfg.covering_mode == "auto" && model.id == "example2");
  if (analytic) {
    if (model.id != "example2")
      fail(ErrorCode::InvalidArgument, "the closed-form covering is available for example2 only");
    rs.covering = analytic_covering(2, rs.grid, cfg.I, cfg.Itilde, *rs.spec);
  } else {
    // coarse stratification on this grid for ball bookkeeping
    StrataStage local = run_strata_stage(model, cfg, n);
    CoveringOptions opts;
    opts.escape_grad_floor = cfg.tol.grad_floor;
    rs.covering = build_covering(model.fam, rs.grid, local.sample, local.strata,
                                 strata_fine.thresholds, cfg.I, cfg.Itilde, opts);
  }

  BumpSystem bumps(rs.covering, model.closed_form);
  rs.partition = verify_partition(bumps, sample_sigma(model.fam, rs.grid, cfg.Itilde,
                                                      rs.covering.cluster_tol),
                                  cfg.I);
  const WindowCache cache(rs.covering, *rs.spec);
  rs.incidence = classify_incidence(cache);

  // per-region connections
  std::vector<RegionConnectionEvaluator> naive_conns, modified_conns;
  for (int m = 0; m < rs.covering.num_regions(); ++m) {
    naive_conns.emplace_back(cache, bumps, m, false, cfg.scheme);
    if (cfg.run_modified) {
      modified_conns.emplace_back(cache, bumps, m, true, cfg.scheme);
      rs.theta_defect = std::max(rs.theta_defect, modified_conns.back().theta_partition_defect());
    }
  }

  // glued-connection annihilation on overlaps of bump supports
  if (cfg.run_modified) {
    for (const auto& pair : rs.incidence.pairs) {
      const Window& wd = rs.covering.windows[static_cast<size_t>(pair.deeper)];
      const Window& ws = rs.covering.windows[static_cast<size_t>(pair.shallower)];
      std::vector<std::int64_t> where;
      for (std::int64_t node : cache.nodes(pair.shallower)) {
        if (!cache.projector(pair.deeper, node) || !cache.projector(pair.shallower, node)) continue;
        const Coord k = rs.grid->coord(node);
        if (bumps.g(wd.region, k) != 0.0 && bumps.g(ws.region, k) != 0.0) where.push_back(node);
      }
      auto product = [&](std::int64_t node) -> const Matrix* {
        static thread_local Matrix scratch;
        const Matrix* a = cache.projector(pair.deeper, node);
        const Matrix* b = cache.projector(pair.shallower, node);
        if (!a || !b) return nullptr;
        scratch = (*a) * (*b);
        return &scratch;
      };
      const double d1 = modified_conns[static_cast<size_t>(wd.region)].annihilation_defect(
          where, product, cfg.scheme);
      const double d2 = modified_conns[static_cast<size_t>(ws.region)].annihilation_defect(
          where, product, cfg.scheme);
      rs.glue_annihilation_defect = std::max({rs.glue_annihilation_defect, d1, d2});
    }
  }

  // escape fields per window, positivity graded inside the bump supports
  std::vector<WindowEscape> escapes;
  for (size_t wi = 0; wi < rs.covering.windows.size(); ++wi) {
    WindowEscape esc = window_escape(cache, static_cast<int>(wi), rs.dh, bumps,
                                     cfg.tol.grad_floor, cfg.scheme);
    rs.min_escape_positivity = std::min(rs.min_escape_positivity, esc.min_compressed_derivative);
    escapes.push_back(std::move(esc));
  }

  const Interval window = cfg.mourre_window_set ? cfg.mourre_window : cfg.I;
  const double h_min = rs.grid->min_spacing();
  const double slack = 20.0 * h_min * h_min;

  auto run_mode = [&](bool modified) {
    ModeArtifacts art;
    AssemblyInputs in;
    in.cache = &cache;
    in.bumps = &bumps;
    in.dh = &rs.dh;
    in.connections = modified ? &modified_conns : &naive_conns;
    in.escapes = &escapes;
    art.generator = assemble_conjugate(in, cfg.scheme);
    art.antisym_defect = antisymmetry_defect(art.generator, cfg.scheme);
    art.support_identity_defect =
        support_identity_defect(rs.covering, bumps, *rs.spec, art.generator);

    const int jmax = modified ? cfg.ad_orders : std::min(cfg.ad_orders, 2);
    art.ads = iterated_ad(art.generator, rs.h, rs.dh, jmax, cfg.scheme, cfg.tol.comm_tol);

    // matrix route
    DiscretizeOptions dopt;
    dopt.scheme = cfg.scheme;
    dopt.allow_boundary_support = rs.covering.analytic;
    const DiscretizedOperator disc = discretize(art.generator, dopt);
    art.hermitian_defect = disc.hermitian_defect;
    const SpMat hmat = multiplication_matrix(rs.h);
    SpMat kj = matrix_commutator(hmat, disc.matrix);
    art.matrix_norms.push_back(operator_norm_estimate(kj));
    for (int j = 2; j <= jmax; ++j) {
      kj = matrix_commutator(disc.matrix, kj);
      art.matrix_norms.push_back(operator_norm_estimate(kj));
    }
    art.cross_validate_ad1 = cross_validate(art.ads.front().op, matrix_commutator(hmat, disc.matrix), dopt);

    art.mourre = mourre_check(*rs.spec, art.ads.front().op.zeroth, window, cfg.mourre_c_target, slack);
    return art;
  };

  if (cfg.run_naive) rs.naive = run_mode(false);
  if (cfg.run_modified) rs.modified = run_mode(true);
  rs.seconds = now_seconds() - t0;
  return rs;
}

ordered_json mode_json(const ModeArtifacts& art) {
  ordered_json j;
  j["antisymmetry_defect"] = art.antisym_defect;
  j["hermitian_defect"] = art.hermitian_defect;
  j["support_identity_defect"] = art.support_identity_defect;
  ordered_json ads = ordered_json::array();
  for (size_t i = 0; i < art.ads.size(); ++i) {
    const auto& a = art.ads[i];
    ordered_json e;
    e["order"] = a.order;
    e["principal_residual"] = a.principal_residual;
    e["zeroth_norm"] = a.zeroth_norm;
    e["second_order_residual"] = a.second_order_residual;
    e["left_first_order_class"] = a.left_first_order_class;
    if (i < art.matrix_norms.size()) e["matrix_norm"] = art.matrix_norms[i];
    ads.push_back(e);
  }
  j["ads"] = ads;
  j["cross_validate_ad1"] = art.cross_validate_ad1;
  j["mourre"] = {{"window", interval_json(art.mourre.window)},
                 {"window_rank", art.mourre.window_rank},
                 {"min_eig", art.mourre.min_eig},
                 {"iterative_min_eig", art.mourre.iterative_min_eig},
                 {"c_target", art.mourre.c_target},
                 {"slack", art.mourre.slack},
                 {"pass", art.mourre.pass}};
  return j;
}

ordered_json covering_json(const Covering& cov, const IncidenceData& inc) {
  ordered_json j;
  ordered_json regions = ordered_json::array();
  for (const auto& r : cov.regions) {
    ordered_json e;
    e["kind"] = r.kind == Region::Kind::Ball ? "ball" : "slab";
    if (r.kind == Region::Kind::Ball) {
      ordered_json c = ordered_json::array();
      for (int a = 0; a < cov.grid->dim(); ++a) c.push_back(r.center[a]);
      e["center"] = c;
      e["radius"] = r.radius;
      e["bump_radius"] = cov.bump_frac * r.radius;
    } else {
      e["axis"] = r.axis;
      e["profile"] = r.profile;
    }
    regions.push_back(e);
  }
  j["regions"] = regions;
  ordered_json windows = ordered_json::array();
  for (const auto& w : cov.windows) {
    ordered_json e;
    e["region"] = w.region;
    e["branch_mode"] = w.branch_mode;
    if (w.branch_mode) {
      e["branch_order"] = w.branch_order;
    } else {
      e["J"] = interval_json(w.J);
      e["J_inner"] = interval_json(w.Jprime);
    }
    e["rank"] = w.rank;
    e["stratum"] = w.stratum_id;
    windows.push_back(e);
  }
  j["windows"] = windows;
  ordered_json pairs = ordered_json::array();
  for (const auto& p : inc.pairs)
    pairs.push_back({{"deeper", p.deeper},
                     {"shallower", p.shallower},
                     {"same_stratum", p.same_stratum},
                     {"absorption_defect", p.absorption_defect}});
  j["incidence"] = pairs;
  ordered_json ords = ordered_json::array();
  for (const auto& o : inc.orderings) ords.push_back(o);
  j["orderings"] = ords;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) fail(ErrorCode::Io, "cannot write " + path.string());
  f << text;
}

}  // namespace

RunReport run_strata(const PipelineConfig& cfg) {
  const ModelHandle model = resolve_model(cfg);
  const int n = cfg.resolutions.back();
  const StrataStage st = run_strata_stage(model, cfg, n);

  RunReport rep;
  rep.doc["version"] = library_version();
  rep.doc["config"] = cfg.to_json();
  rep.doc["stages"]["strata"] = strata_json(st, cfg.embed_figure_data);

  LedgerEntry e;
  e.id = "strata.multiplicity-conservation";
  e.description = "sampled multiplicities account for every in-window eigenvalue";
  double worst = 0.0;
  {
    MatrixField h = sample_family(model.fam, st.grid);
    for (std::int64_t node = 0; node < st.grid->num_nodes(); ++node) {
      const SpectralDecomposition d = eigen_decompose(h.at(node), st.cluster_tol);
      int expected = 0;
      for (const auto& c : d.clusters)
        if (st.sample.window.contains(c.mean)) expected += c.count;
      int got = 0;
      for (const auto& t : st.sample.triples)
        if (t.node == node) got += t.multiplicity;
      worst = std::max(worst, static_cast<double>(std::abs(expected - got)));
    }
  }
  e.value = worst;
  e.threshold = 0.5;
  e.pass = worst < 0.5;
  rep.ledger.push_back(e);

  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    write_strata_csv((fs::path(cfg.output_dir) / "strata.csv").string(), st.sample, st.strata);
    ordered_json th = rep.doc["stages"]["strata"]["thresholds"];
    write_text(fs::path(cfg.output_dir) / "thresholds.json", th.dump(2) + "\n");
    ordered_json led = ordered_json::array();
    for (const auto& l : rep.ledger)
      led.push_back({{"id", l.id}, {"pass", l.pass}, {"value", l.value}, {"threshold", l.threshold}});
    rep.doc["ledger"] = led;
    write_text(fs::path(cfg.output_dir) / "report.json", rep.doc.dump(2) + "\n");
  }
  return rep;
}

RunReport run_pipeline(const PipelineConfig& cfg) {
  const ModelHandle model = resolve_model(cfg);
  RunReport rep;
  rep.doc["version"] = library_version();
  rep.doc["config"] = cfg.to_json();
  rep.doc["model"] = model.id;

  // stratification and thresholds at the finest resolution
  const StrataStage strata_fine = run_strata_stage(model, cfg, cfg.resolutions.back());
  rep.doc["stages"]["strata"] = strata_json(strata_fine, cfg.embed_figure_data);
  for (double tau : strata_fine.thresholds.values)
    if (cfg.Itilde.contains(tau))
      fail(ErrorCode::ThresholdInInterval,
           "threshold at energy " + std::to_string(tau) + " inside the working interval");

  std::vector<ResolutionStage> stages;
  ordered_json per_res = ordered_json::array();
  for (int n : cfg.resolutions) {
    ResolutionStage rs = run_resolution(model, cfg, strata_fine, n);
    ordered_json j;
    j["resolution"] = n;
    j["spacing"] = rs.grid->min_spacing();
    j["covering"] = covering_json(rs.covering, rs.incidence);
    j["partition"] = {{"max_g_defect", rs.partition.max_g_defect},
                      {"max_sigma_defect", rs.partition.max_sigma_defect},
                      {"min_raw_sum", rs.partition.min_raw_sum}};
    j["min_escape_positivity"] = rs.min_escape_positivity;
    j["glue_annihilation_defect"] = rs.glue_annihilation_defect;
    if (cfg.run_naive) j["naive"] = mode_json(rs.naive);
    if (cfg.run_modified) j["modified"] = mode_json(rs.modified);
    j["seconds"] = rs.seconds;
    per_res.push_back(j);
    stages.push_back(std::move(rs));
  }
  rep.doc["stages"]["per_resolution"] = per_res;

  // ---- ledger ---------------------------------------------------------
  auto add = [&rep](const std::string& id, const std::string& desc, bool pass, double value,
                    double threshold) {
    rep.ledger.push_back({id, desc, pass, value, threshold});
  };

  {
    double worst_g = 0.0, worst_sigma = 0.0;
    for (const auto& rs : stages) {
      worst_g = std::max(worst_g, rs.partition.max_g_defect);
      worst_sigma = std::max(worst_sigma, rs.partition.max_sigma_defect);
    }
    add("partition.base", "sum of squared bumps is 1 on the covered shell", worst_g <= 1e-12,
        worst_g, 1e-12);
    add("partition.energy", "bump-cutoff partition is 1 on the sampled variety",
        worst_sigma <= 1e-10, worst_sigma, 1e-10);
  }
  {
    double worst = 1e30;
    for (const auto& rs : stages) worst = std::min(worst, rs.min_escape_positivity);
    add("escape.positivity", "compressed escape derivative at least 1/2", worst >= 0.5 - 1e-8,
        worst, 0.5 - 1e-8);
  }
  if (cfg.run_modified) {
    const auto& last = stages.back();
    const double h = last.grid->min_spacing();
    add("connection.annihilation", "glued connection kills overlap products (finest grid)",
        last.glue_annihilation_defect <= 5.0 * h * h, last.glue_annihilation_defect, 5.0 * h * h);
    add("mourre.certificate", "windowed commutator positivity (finest grid, modified mode)",
        last.modified.mourre.pass, last.modified.mourre.min_eig,
        cfg.mourre_c_target - last.modified.mourre.slack);
    add("support.identity", "generator equals its energy-cutoff compression",
        last.modified.support_identity_defect <= 1e-8, last.modified.support_identity_defect, 1e-8);
    {
      double worst = 0.0;
      for (const auto& rs : stages) worst = std::max(worst, rs.modified.antisym_defect / (rs.grid->min_spacing() * rs.grid->min_spacing()));
      add("symmetry.defect", "formal symmetry defect scales like h^2", worst <= 25.0, worst, 25.0);
    }
  }

  // refinement flags across resolutions
  if (stages.size() >= 2) {
    if (cfg.run_naive) {
      bool grows = true;
      for (size_t i = 1; i < stages.size(); ++i) {
        const auto& prev = stages[i - 1].naive.matrix_norms;
        const auto& cur = stages[i].naive.matrix_norms;
        if (prev.size() >= 2 && cur.size() >= 2) {
          if (cur[1] < 1.7 * prev[1]) grows = false;
        }
      }
      double ratio = 0.0;
      if (stages.size() >= 2) {
        const auto& a = stages[stages.size() - 2].naive.matrix_norms;
        const auto& b = stages.back().naive.matrix_norms;
        if (a.size() >= 2 && b.size() >= 2 && a[1] > 0) ratio = b[1] / a[1];
      }
      add("dichotomy.naive-unbounded", "second commutator matrix norm grows under refinement",
          grows, ratio, 1.7);
      rep.doc["stages"]["refinement"]["naive_flag"] = grows ? "UNBOUNDED" : "INCONCLUSIVE";
    }
    if (cfg.run_modified) {
      double worst_var = 0.0;
      const size_t orders = stages.back().modified.matrix_norms.size();
      for (size_t o = 0; o < orders; ++o) {
        double lo = 1e300, hi = -1e300;
        bool all = true;
        for (const auto& rs : stages) {
          if (o >= rs.modified.matrix_norms.size()) {
            all = false;
            break;
          }
          lo = std::min(lo, rs.modified.matrix_norms[o]);
          hi = std::max(hi, rs.modified.matrix_norms[o]);
        }
        if (all && lo > 0) worst_var = std::max(worst_var, (hi - lo) / lo);
      }
      add("dichotomy.modified-bounded", "all commutator matrix norms stable under refinement",
          worst_var <= 0.10, worst_var, 0.10);
      rep.doc["stages"]["refinement"]["modified_flag"] = worst_var <= 0.10 ? "BOUNDED" : "DIVERGENT";
      rep.doc["stages"]["refinement"]["modified_norm_variation"] = worst_var;
    }
  }

  // closed-form agreement for the second model
  if (model.closed_form && model.id == "example2" && cfg.run_naive && cfg.run_modified) {
    const auto& last = stages.back();
    const double h = last.grid->min_spacing();
    const ClosedFormModel& cf = *model.closed_form;
    double worst = 0.0;
    for (std::int64_t node = 0; node < last.grid->num_nodes(); ++node) {
      const Coord k = last.grid->coord(node);
      for (int a = 0; a < last.grid->dim(); ++a) {
        worst = std::max(worst, spectral_norm(last.naive.generator.principal[static_cast<size_t>(a)].at(node) -
                                              cf.conjugate_principal(a, k, false)));
        worst = std::max(worst, spectral_norm(last.modified.generator.principal[static_cast<size_t>(a)].at(node) -
                                              cf.conjugate_principal(a, k, true)));
      }
      worst = std::max(worst, spectral_norm(last.naive.generator.zeroth.at(node) -
                                            cf.conjugate_zeroth(k, false)));
      worst = std::max(worst, spectral_norm(last.modified.generator.zeroth.at(node) -
                                            cf.conjugate_zeroth(k, true)));
    }
    add("oracle.coefficient-agreement", "assembled coefficients match the closed forms",
        worst <= 5.0 * h * h, worst, 5.0 * h * h);
    rep.doc["stages"]["oracle"]["coefficient_error"] = worst;

    const double floor = cf.naive_ad2_floor();
    double measured = 1e300;
    for (const auto& rs : stages) {
      if (rs.naive.ads.size() >= 2)
        measured = std::min(measured, rs.naive.ads[1].principal_residual);
    }
    add("oracle.naive-ad2-floor", "naive second-commutator principal part stays above the scan",
        measured >= 0.9 * floor, measured, 0.9 * floor);
    rep.doc["stages"]["oracle"]["naive_ad2_floor"] = floor;
    rep.doc["stages"]["oracle"]["naive_ad2_measured_min"] = measured;
  }

  ordered_json led = ordered_json::array();
  for (const auto& l : rep.ledger)
    led.push_back({{"id", l.id},
                   {"description", l.description},
                   {"pass", l.pass},
                   {"value", l.value},
                   {"threshold", l.threshold}});
  rep.doc["ledger"] = led;

  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    write_strata_csv((fs::path(cfg.output_dir) / "strata.csv").string(), strata_fine.sample,
                     strata_fine.strata);
    write_text(fs::path(cfg.output_dir) / "report.json", rep.doc.dump(2) + "\n");
    // norm table
    std::string csv = "resolution,mode,order,coef_principal_residual,coef_zeroth_norm,matrix_norm,flag\n";
    for (const auto& rs : stages) {
      auto rows = [&](const ModeArtifacts& art, const char* mode) {
        for (size_t i = 0; i < art.ads.size(); ++i) {
          csv += std::to_string(rs.grid->nodes_per_axis());
          csv += std::string(",") + mode + "," + std::to_string(art.ads[i].order) + "," +
                 std::to_string(art.ads[i].principal_residual) + "," +
                 std::to_string(art.ads[i].zeroth_norm) + ",";
          csv += i < art.matrix_norms.size() ? std::to_string(art.matrix_norms[i]) : "";
          csv += std::string(",") + (art.ads[i].left_first_order_class ? "LEAVES_CLASS" : "OK") + "\n";
        }
      };
      if (cfg.run_naive) rows(rs.naive, "naive");
      if (cfg.run_modified) rows(rs.modified, "modified");
    }
    write_text(fs::path(cfg.output_dir) / "normtable.csv", csv);
  }
  return rep;
}

void emit_figure(const std::string& report_path, const std::string& which,
                 const std::string& output_dir) {
  std::ifstream f(report_path);
  if (!f) fail(ErrorCode::Io, "cannot read report " + report_path);
  json doc;
  try {
    f >> doc;
  } catch (const std::exception& e) {
    fail(ErrorCode::Json, std::string("report is not valid JSON: ") + e.what());
  }
  fs::create_directories(output_dir);

  if (which == "strata") {
    if (!doc.contains("stages") || !doc["stages"].contains("strata") ||
        !doc["stages"]["strata"].contains("sigma_points"))
      fail(ErrorCode::MissingStage, "report carries no stratification data");
    std::string csv = "k1,k2,lambda,mu,stratum_id\n";
    for (const auto& row : doc["stages"]["strata"]["sigma_points"]) {
      const size_t n = row.size();
      // row = coords..., lambda, mu, stratum
      for (size_t i = 0; i + 3 < n; ++i) csv += std::to_string(row[i].get<double>()) + ",";
      csv += std::to_string(row[n - 3].get<double>()) + "," +
             std::to_string(row[n - 2].get<int>()) + "," + std::to_string(row[n - 1].get<int>()) + "\n";
    }
    write_text(fs::path(output_dir) / "figure_strata.csv", csv);
    return;
  }
  if (which == "levelsets") {
    if (!doc.contains("model")) fail(ErrorCode::MissingStage, "report names no model");
    const std::string id = doc["model"].get<std::string>();
    if (id != "example1" && id != "example2")
      fail(ErrorCode::MissingStage, "level sets need a built-in model");
    const ClosedFormModel cf(id == "example1" ? 1 : 2);
    const DomainSpec dom = builtin_domain(id);
    GridPtr grid = build_grid(dom, 257);
    const double lam0 = doc["config"]["interval"][0].get<double>() * 0.5 +
                        doc["config"]["interval"][1].get<double>() * 0.5;
    const double delta_wide = 0.4, delta_narrow = 0.04;
    std::string csv = "k1,k2,branch,lambda,band\n";
    for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
      const Coord k = grid->coord(node);
      for (int b : {+1, -1}) {
        const double lam = cf.lambda(b, k);
        const double d = std::abs(lam - lam0);
        if (d > delta_wide) continue;
        csv += std::to_string(k[0]) + "," + std::to_string(k[1]) + "," + std::to_string(b) + "," +
               std::to_string(lam) + "," + (d <= delta_narrow ? "narrow" : "wide") + "\n";
      }
    }
    write_text(fs::path(output_dir) / "figure_levelsets.csv", csv);
    return;
  }
  if (which == "supports") {
    if (!doc.contains("stages") || !doc["stages"].contains("per_resolution") ||
        doc["stages"]["per_resolution"].empty())
      fail(ErrorCode::MissingStage, "report carries no covering data");
    const auto& cov = doc["stages"]["per_resolution"].back()["covering"];
    std::string csv = "region,kind,center_k1,center_k2,radius,bump_radius,axis,profile\n";
    int m = 0;
    for (const auto& r : cov["regions"]) {
      csv += std::to_string(m++) + "," + r["kind"].get<std::string>() + ",";
      if (r["kind"] == "ball") {
        csv += std::to_string(r["center"][0].get<double>()) + "," +
               std::to_string(r["center"][1].get<double>()) + "," +
               std::to_string(r["radius"].get<double>()) + "," +
               std::to_string(r["bump_radius"].get<double>()) + ",,\n";
      } else {
        csv += ",,,," + std::to_string(r["axis"].get<int>()) + "," +
               std::to_string(r["profile"].get<int>()) + "\n";
      }
    }
    write_text(fs::path(output_dir) / "figure_supports.csv", csv);
    return;
  }
  if (which == "normtable") {
    if (!doc.contains("stages") || !doc["stages"].contains("per_resolution"))
      fail(ErrorCode::MissingStage, "report carries no commutator tables");
    std::string csv = "resolution,mode,order,coef_principal_residual,coef_zeroth_norm,matrix_norm\n";
    for (const auto& rs : doc["stages"]["per_resolution"]) {
      for (const char* mode : {"naive", "modified"}) {
        if (!rs.contains(mode)) continue;
        for (const auto& a : rs[mode]["ads"]) {
          csv += std::to_string(rs["resolution"].get<int>()) + "," + mode + "," +
                 std::to_string(a["order"].get<int>()) + "," +
                 std::to_string(a["principal_residual"].get<double>()) + "," +
                 std::to_string(a["zeroth_norm"].get<double>()) + ",";
          csv += a.contains("matrix_norm") ? std::to_string(a["matrix_norm"].get<double>()) : "";
          csv += "\n";
        }
      }
    }
    write_text(fs::path(output_dir) / "figure_normtable.csv", csv);
    return;
  }
  fail(ErrorCode::InvalidArgument, "unknown figure '" + which + "'");
}

}  // namespace fibm
