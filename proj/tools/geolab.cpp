// geolab: command-line driver for the closed-geodesic experiments.
#include <iostream>

#include "CLI11.hpp"

#include "geolab/reports.hpp"

namespace fs = std::filesystem;
using namespace geolab;

namespace {

enum Exit { pass = 0, invariant = 1, config = 2, undecided = 3 };

struct Flags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> k, mmax, m;
    std::vector<int> primes;
    std::vector<double> eps;
    std::vector<std::string> tolerances;
    std::optional<double> ell;
    std::vector<double> candidates;
};

ExperimentConfig resolve(const Flags& f) {
    ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
    if (!f.out.empty()) c.out = f.out;
    if (f.seed) c.seed = *f.seed;
    if (f.k) c.k = *f.k;
    if (f.mmax) c.m_max = *f.mmax;
    if (f.m) c.m = *f.m;
    if (f.ell) c.ell = *f.ell;
    if (!f.primes.empty()) c.primes = f.primes;
    if (!f.eps.empty()) c.eps = f.eps;
    if (!f.candidates.empty()) c.candidates = f.candidates;
    for (const auto& t : f.tolerances) apply_tolerance_override(c, t);
    return c;
}

bool wants(const ExperimentConfig& c, const std::string& fmt) {
    return std::find(c.formats.begin(), c.formats.end(), fmt) != c.formats.end();
}

void emit_csv(const ExperimentConfig& c, const std::string& name, const std::string& what, const std::string& body) {
    if (!wants(c, "csv")) return;
    write_atomic(fs::path(c.out) / name, csv_header(c, what) + body);
    std::cout << "wrote " << (fs::path(c.out) / name).string() << '\n';
}

void emit_json(const ExperimentConfig& c, const std::string& name, Json j) {
    if (!wants(c, "json")) return;
    j["config"] = config_json(c);
    j["timestamp"] = utc_timestamp();
    write_atomic(fs::path(c.out) / name, j.dump(2) + "\n");
    std::cout << "wrote " << (fs::path(c.out) / name).string() << '\n';
}

/// Reference loop of the config, polished to a critical point.
BrokenLoop polished_reference(const Manifold& m, const ExperimentConfig& c) {
    const auto rc = reference_circle(c);
    if (!rc) throw ConfigError("no reference circle: add a 'circle' block to the config");
    const BrokenLoop seed = reference_loop(m, *rc, c.k);
    const SearchOptions o = search_options(c);
    const DescentResult r = descend(m, seed, o.energy_floor, o.descent);
    if (r.status != DescentStatus::critical) throw UndecidedError("reference circle escaped during polishing");
    return r.loop;
}

int run_find(const ExperimentConfig& c) {
    const ManifoldPtr m = make_manifold(c);
    const SearchReport rep = find_circles(*m, search_seeds(*m, c), search_options(c));
    emit_csv(c, "circles.csv", "find", circles_csv(rep.circles));
    Json j = {{"escaped", rep.escaped}, {"failed", rep.failed}, {"above_cap", rep.above_cap},
              {"failures", rep.failures}, {"circles", Json::array()}};
    for (const auto& circle : rep.circles) j["circles"].push_back(to_json(circle));
    emit_json(c, "circles.json", j);
    std::cout << rep.circles.size() << " circles, " << rep.escaped << " escaped, " << rep.failed << " failed\n";
    const bool all_decided = std::all_of(rep.circles.begin(), rep.circles.end(),
                                         [](const CriticalCircle& x) { return x.indices_decided; });
    return all_decided ? pass : undecided;
}

int run_index(const ExperimentConfig& c) {
    const ManifoldPtr m = make_manifold(c);
    const BrokenLoop loop = polished_reference(*m, c);
    const int dim = m->dimension();
    IndexReport r = indices(*m, loop);
    const BottData b = bott_data(*m, loop, {c.m_max, true});
    r.average_index = b.average_index;
    const IterationCertificate it = iteration_inequalities_check(b.table, b.average_index, dim, c.primes);
    const auto sup = superadditivity_check(*m, loop, c.m_max, false);
    emit_csv(c, "bott.csv", "index", bott_csv(b));
    Json rows = Json::array();
    for (const auto& row : it.rows)
        rows.push_back({{"m", row.m}, {"ind", row.ind}, {"nul", row.nul}, {"lower_slack", row.lower_slack},
                        {"upper_slack", row.upper_slack}, {"pass", row.pass}, {"equality", row.equality}});
    Json srows = Json::array();
    bool sup_ok = true;
    for (const auto& s : sup) {
        sup_ok = sup_ok && s.pass();
        srows.push_back({{"m", s.m}, {"ind_omega", s.ind_omega}, {"nul_omega", s.nul_omega},
                         {"index_slack", s.index_slack}, {"sum_slack", s.sum_slack}});
    }
    const bool sandwich = r.sandwich_holds(dim);
    const bool lemma = !it.hypothesis_ii || based_identity_check(it, r, dim);
    emit_json(c, "index.json",
              {{"ind", r.ind}, {"nul", r.nul}, {"ind_omega", r.ind_omega}, {"nul_omega", r.nul_omega},
               {"average_index", b.average_index}, {"gap", r.gap}, {"tau0", r.tau0}, {"k", r.k},
               {"bott_consistent", b.consistent()}, {"conjugation_symmetric", b.conjugation_symmetric()},
               {"iteration_inequalities", rows}, {"hypothesis_ii", it.hypothesis_ii}, {"sandwich", sandwich},
               {"superadditivity", srows}, {"based_identity", lemma}});
    std::cout << "ind=" << r.ind << " nul=" << r.nul << " ind_omega=" << r.ind_omega << " nul_omega=" << r.nul_omega
              << " avg=" << b.average_index << '\n';
    if (!b.undecided_samples.empty()) return undecided;
    return b.consistent() && it.all_pass && sandwich && sup_ok && lemma ? pass : invariant;
}

int run_scan(const ExperimentConfig& c) {
    const ManifoldPtr m = make_manifold(c);
    if (m->exhaustion().empty()) throw ConfigError("scan-conjugate needs 'exhaustion' radii");
    ConjugateScanOptions o;
    o.seed = c.seed;
    o.conjugate.tolerance = tolerance(c, "conjugate_tol", o.conjugate.tolerance);
    const double ell = c.ell > 0 ? c.ell : 4.0;
    const ConjugateReport r = conjugate_scan(*m, ell, o);
    emit_csv(c, "conjugate.csv", "scan-conjugate", conjugate_csv(r));
    emit_json(c, "conjugate.json",
              {{"ell", r.ell}, {"alpha1", r.alpha1}, {"condition_violated", r.condition_violated},
               {"shell_samples", r.shell_samples}, {"shell_conjugate", r.shell_conjugate}, {"skipped", r.skipped}});
    std::cout << "alpha1=" << r.alpha1 << (r.condition_violated ? " (no conjugate-free shell found)" : "") << '\n';
    return pass;
}

int run_penalize(const ExperimentConfig& c) {
    const ManifoldPtr m = make_manifold(c);
    const PenaltySchedule f = make_schedule(c, *m);
    const PenalizedSearchReport rep = penalized_search(*m, f, c.penalty.alpha, search_seeds(*m, c), search_options(c));
    std::vector<PenalizedCriticalPoint> all = rep.genuine;
    all.insert(all.end(), rep.artifacts.begin(), rep.artifacts.end());
    emit_csv(c, "penalty.csv", "penalize", penalty_csv(all));
    const double ell = c.ell > 0 ? c.ell : 4.0;
    Json filters = Json::array();
    int flagged = 0;
    for (const auto& a : rep.artifacts) {
        const ArtifactFilter af = artifact_index_filter(a, ell, m->dimension());
        flagged += af.applicable && !af.pass;
        filters.push_back({{"energy", a.energy}, {"ind_plus_nul", af.ind_plus_nul}, {"bound", af.bound},
                           {"applicable", af.applicable}, {"pass", af.pass}, {"note", af.note}});
    }
    emit_json(c, "penalty.json",
              {{"genuine", rep.genuine.size()}, {"artifacts", rep.artifacts.size()}, {"escaped", rep.escaped},
               {"failed", rep.failed}, {"failures", rep.failures}, {"artifact_filter", filters},
               {"schedule", f.metadata()}});
    std::cout << rep.genuine.size() << " genuine, " << rep.artifacts.size() << " artifacts";
    if (flagged) std::cout << ", " << flagged << " artifacts break the index bound (alpha too small)";
    std::cout << '\n';
    return pass;
}

int run_hingston(const ExperimentConfig& c) {
    const HingstonChart ch = model_chart(c.model);
    const RhoEnvelope env = interaction_modulus(ch, 4000, 40, c.seed);
    std::vector<double> eps = c.eps;
    if (eps.empty()) eps.push_back(0.0);  // 0: eps0 / 2
    Json runs = Json::array();
    bool ok = true;
    for (double e : eps) {
        HomotopyBudget b;
        if (e > 0) {
            b = budget(ch, env, e, 1000, c.seed);
        } else {
            b = budget(ch, env, boundary_margin(ch, 1000, c.seed) / 2, 1000, c.seed);
        }
        int m = c.m;
        if (m == 0)
            for (m = 3; !(is_odd_prime(m) && m > b.m_bar); ++m) {
            }
        const CycleTrace t = cycle_push(ch, b, m, std::max(c.samples, 1000), 10, c.seed);
        ok = ok && t.ok();
        runs.push_back(to_json(t));
        std::cout << "eps=" << b.eps << " delta=" << b.delta << " mu=" << b.mu << " m_bar=" << b.m_bar << " m=" << m
                  << " max_final=" << t.final.value << " < " << t.bound_final << (t.ok() ? " pass" : " FAIL") << '\n';
    }
    emit_json(c, "hingston.json", {{"c", ch.c}, {"rho_samples", env.samples}, {"runs", runs}});
    return ok ? pass : invariant;
}

int run_windows(const ExperimentConfig& c) {
    double ell = c.ell;
    if (!(ell > 0)) ell = std::sqrt(model_chart(c.model).c);
    std::vector<int> ms;
    std::vector<double> eps;
    const std::vector<double> base = c.eps.empty() ? std::vector<double>{0.1} : c.eps;
    if (c.m > 0) {
        for (double e : base) {
            ms.push_back(c.m);
            eps.push_back(e);
        }
    } else {
        for (int m = 1; m <= c.m_max; ++m) {
            ms.push_back(m);
            eps.push_back(base.front() / m);
        }
    }
    const PigeonholeCertificate cert = pigeonhole_distinctness(ms, eps, ell, c.candidates);
    emit_csv(c, "windows.csv", "windows", windows_csv(cert));
    if (!wants(c, "csv")) std::cout << windows_csv(cert);
    for (const auto& [L, m] : cert.cutoff)
        std::cout << "L=" << L << " last window with a multiple: " << (m ? std::to_string(m) : "none") << '\n';
    return pass;
}

struct Matrix_ {
    std::vector<std::pair<std::string, int>> rows;
    void add(const std::string& name, int status) { rows.emplace_back(name, status); }
    int worst() const {
        int w = pass;
        for (const auto& [_, s] : rows)
            if (s == invariant) w = invariant;
            else if (s == undecided && w == pass) w = undecided;
        return w;
    }
};

int run_verify(const ExperimentConfig& c) {
    const ManifoldPtr m = make_manifold(c);
    const int dim = m->dimension();
    Matrix_ out;
    auto guard = [&](const std::string& name, auto&& fn) {
        try {
            out.add(name, fn() ? pass : invariant);
        } catch (const UndecidedError& e) {
            std::cerr << name << ": " << e.what() << '\n';
            out.add(name, undecided);
        } catch (const Error& e) {
            std::cerr << name << ": " << e.what() << '\n';
            out.add(name, invariant);
        }
    };
    guard("derivatives", [&] {
        std::mt19937_64 rng(c.seed);
        for (int i = 0; i < 10; ++i) {
            const DerivativeCheck d = derivative_check(*m, random_seed(*m, rng, c.radial_max, 8, 0.5));
            if (!(d.gradient_rel < 1e-6 && d.hessian_rel < 1e-6 && d.hessian_asymmetry < 1e-10)) return false;
        }
        return true;
    });
    if (const auto rc = reference_circle(c)) {
        std::optional<BrokenLoop> loop;
        guard("reference_critical", [&] {
            loop = polished_reference(*m, c);
            return true;
        });
        if (loop) {
            const BottData b = bott_data(*m, *loop, {c.m_max, true});
            IndexReport r;
            guard("indices_decided", [&] {
                r = indices(*m, *loop);
                return true;
            });
            guard("velocity_in_kernel", [&] {
                const EnergyDerivatives d = energy_derivatives(*m, *loop, true);
                const LoopTangent v = discrete_velocity(*m, *loop);
                return (d.hessian * v).norm() / (d.hessian.norm() * v.norm()) < 1e-6;
            });
            guard("bott_formula", [&] {
                if (!b.undecided_samples.empty()) throw UndecidedError("twisted spectrum undecided");
                return b.consistent() && b.conjugation_symmetric();
            });
            const IterationCertificate it = iteration_inequalities_check(b.table, b.average_index, dim, c.primes);
            guard("iteration_inequalities", [&] { return it.all_pass; });
            guard("sandwich", [&] { return r.sandwich_holds(dim); });
            guard("superadditivity", [&] {
                for (const auto& s : superadditivity_check(*m, *loop, c.m_max, false))
                    if (!s.pass()) return false;
                return true;
            });
            guard("based_identity", [&] { return !it.hypothesis_ii || based_identity_check(it, r, dim); });
            guard("certificate", [&] {
                CriticalCircle circle;
                circle.representative = *loop;
                circle.energy = energy(*m, *loop);
                circle.length = std::sqrt(circle.energy);
                circle.indices = r;
                circle.indices_decided = true;
                circle.multiplicity = multiplicity(*m, *loop);
                const SearchOptions o = search_options(c);
                circle.isolated = isolation_test(*m, circle, o);
                return certificate_consistent(certify_local_homology(*m, circle, b, o), b, c.primes);
            });
        }
    }
    std::ostringstream body;
    body << "check,status\n";
    for (const auto& [name, s] : out.rows) {
        const char* label = s == pass ? "pass" : s == invariant ? "FAIL" : "undecided";
        std::cout << std::left << std::setw(24) << name << label << '\n';
        body << name << ',' << label << '\n';
    }
    emit_csv(c, "verify.csv", "verify", body.str());
    return out.worst();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"geolab: closed geodesics, iteration indices and penalization experiments"};
    app.require_subcommand(1);
    Flags f;
    auto common = [&f](CLI::App* s) {
        s->add_option("--config", f.config, "JSON experiment config");
        s->add_option("--out", f.out, "output directory");
        s->add_option("--seed", f.seed, "random seed");
        s->add_option("--k", f.k, "nodes per loop");
        s->add_option("--mmax", f.mmax, "largest iterate");
        s->add_option("--primes", f.primes, "prime set")->delimiter(',');
        s->add_option("--eps", f.eps, "epsilon list")->delimiter(',');
        s->add_option("--tolerance", f.tolerances, "NAME=VALUE override");
    };
    std::map<std::string, int (*)(const ExperimentConfig&)> handlers{
        {"find", run_find},         {"index", run_index},     {"scan-conjugate", run_scan},
        {"penalize", run_penalize}, {"hingston", run_hingston}, {"windows", run_windows},
        {"verify", run_verify}};
    std::map<std::string, std::string> help{
        {"find", "multi-start search for closed geodesics"},
        {"index", "index, nullity and Bott tables of the reference circle"},
        {"scan-conjugate", "conjugate-point scan over the exhaustion shells"},
        {"penalize", "search on the penalized energy"},
        {"hingston", "model chart, budget and cycle push"},
        {"windows", "length windows and multiples of candidate lengths"},
        {"verify", "invariant suite; pass/fail matrix"}};
    for (const auto& [name, _] : handlers) {
        CLI::App* s = app.add_subcommand(name, help[name]);
        common(s);
        if (name == "windows" || name == "hingston" || name == "scan-conjugate" || name == "penalize") {
            s->add_option("--m", f.m, "iterate / window index");
            s->add_option("--ell", f.ell, "base length");
        }
        if (name == "windows") s->add_option("--candidates", f.candidates, "candidate lengths")->delimiter(',');
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? pass : config;
    }
    try {
        const ExperimentConfig c = resolve(f);
        for (const auto& [name, fn] : handlers)
            if (app.got_subcommand(name)) return fn(c);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config;
    } catch (const Json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config;
    } catch (const UndecidedError& e) {
        std::cerr << "undecided: " << e.what() << '\n';
        return undecided;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return invariant;
    }
    return pass;
}
