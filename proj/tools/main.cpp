// npu-dse: design-space exploration and reliability experiments for small
// NPU-style accelerators.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "npudse/dse.hpp"
#include "npudse/funcsim.hpp"
#include "npudse/reliability.hpp"

namespace fs = std::filesystem;
using namespace npudse;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot write '" + path.string() + "'");
  f << text;
}

design::DesignSpaceSpec load_space(const std::string& space_path,
                                   const std::string& library_path) {
  json j = json::parse(slurp(space_path));
  if (!library_path.empty()) j["library"] = json::parse(slurp(library_path));
  return design::load_design_space(j);
}

workload::OperatorNest pick_nest(const std::string& model_path,
                                 const std::string& op_name) {
  workload::ModelGraph g = workload::fuse_operators(workload::parse_model(slurp(model_path)));
  for (const auto& op : g.operators) {
    if (!op_name.empty() && op.name != op_name) continue;
    if (op.kind == workload::OpKind::Conv2d || op.kind == workload::OpKind::Matmul)
      return workload::lower_to_nest(op, g);
    if (!op_name.empty())
      throw InputError("operator '" + op_name + "' is not a mappable nest");
  }
  throw InputError(op_name.empty() ? "model has no mappable operator"
                                   : "no operator named '" + op_name + "'");
}

std::map<std::string, double> parse_constraints(const std::vector<std::string>& cs) {
  std::map<std::string, double> out;
  for (const auto& c : cs) {
    auto eq = c.find('=');
    if (eq == std::string::npos)
      throw InputError("constraint '" + c + "' is not metric=value");
    std::string metric = c.substr(0, eq);
    double v;
    try {
      v = std::stod(c.substr(eq + 1));
    } catch (...) {
      throw InputError("constraint '" + c + "': bad value");
    }
    out[metric] = v;
  }
  return out;
}

// shared reliability benchmark: a seeded synthetic classification task and a
// small trained MLP, identical for every faults subcommand
struct Bench {
  nn::Dataset train, test;
  nn::TinyNet net;
  nn::QuantizedNet qnet;
};

Bench make_bench(uint64_t seed) {
  Bench b;
  uint64_t task = Rng::derive(seed, 100);
  b.train = nn::make_synthetic(Rng::derive(seed, 101), 256, 16, 4, 1.0, task);
  b.test = nn::make_synthetic(Rng::derive(seed, 102), 256, 16, 4, 1.0, task);
  b.net = nn::TinyNet::init({16, 16, 4}, Rng::derive(seed, 103));
  nn::train_sgd(b.net, b.train, 30, 0.05f, 16, Rng::derive(seed, 104));
  b.qnet = nn::quantize_net(b.net);
  return b;
}

std::vector<long> column_map_for(const nn::QuantizedNet& qnet,
                                 const rel::FaultMap& fm) {
  // column-level saliency: every filter assigned round-robin to f mod cols
  std::vector<double> sal(static_cast<size_t>(fm.cols), 0.0);
  for (size_t l = 0; l < qnet.W.size(); ++l) {
    long in = qnet.dims[l], out = qnet.dims[l + 1];
    for (long f = 0; f < out; ++f)
      for (long i = 0; i < in; ++i)
        sal[static_cast<size_t>(f % fm.cols)] +=
            std::abs(static_cast<double>(qnet.W[l].q[static_cast<size_t>(f * in + i)])) *
            qnet.W[l].scale;
  }
  return rel::fault_aware_map(sal, fm);
}

int emit(const json& j, const std::string& out_dir, const std::string& name,
         bool as_json, const std::string& summary) {
  if (!out_dir.empty()) spit(fs::path(out_dir) / name, j.dump(2) + "\n");
  if (as_json)
    std::cout << j.dump(2) << "\n";
  else
    std::cout << summary << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NPU design-space exploration"};
  app.require_subcommand(1);

  std::string model_path, library_path, space_path, design_path, schedule_path;
  std::string objective = "latency", out_dir, op_name, method = "guided";
  std::vector<std::string> constraints;
  long budget = 0;
  uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  bool as_json = false;
  long limit = 20;
  long rows = 4, cols = 4;
  double pe_rate = 0.0, mem_ber = 0.0;
  std::string rates_csv = "0.05,0.1,0.25";
  int sweep_seeds = 5;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--out", out_dir, "output directory");
    c->add_flag("--json", as_json, "print machine-readable JSON to stdout");
  };
  auto add_seed = [&](CLI::App* c) {
    c->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) {
      seed_set = true;
    });
  };

  CLI::App* explore = app.add_subcommand("explore", "search the design space");
  explore->add_option("--model", model_path, "model document")->required();
  explore->add_option("--library", library_path, "component library document");
  explore->add_option("--space", space_path, "design-space document")->required();
  explore->add_option("--op", op_name, "operator to map (default: first nest)");
  explore->add_option("--objective", objective)
      ->check(CLI::IsMember({"latency", "energy", "area", "edp", "fit"}));
  explore->add_option("--constraint", constraints, "metric=value upper bound");
  explore->add_option("--budget", budget, "max cost evaluations (0 = exhaustive)");
  explore->add_option("--method", method)
      ->check(CLI::IsMember({"guided", "random", "anneal"}));
  explore->add_option("--jobs", jobs, "worker threads");
  add_seed(explore);
  add_common(explore);

  CLI::App* eval = app.add_subcommand("eval", "cost one design + schedule");
  eval->add_option("--model", model_path)->required();
  eval->add_option("--library", library_path);
  eval->add_option("--space", space_path)->required();
  eval->add_option("--op", op_name);
  eval->add_option("--design", design_path)->required();
  eval->add_option("--schedule", schedule_path)->required();
  eval->add_option("--constraint", constraints);
  add_common(eval);

  CLI::App* mapspace = app.add_subcommand("mapspace", "inspect the mapping space");
  mapspace->add_option("--model", model_path)->required();
  mapspace->add_option("--library", library_path);
  mapspace->add_option("--space", space_path)->required();
  mapspace->add_option("--op", op_name);
  mapspace->add_option("--design", design_path)->required();
  mapspace->add_option("--limit", limit, "schedules to list");
  add_common(mapspace);

  CLI::App* report = app.add_subcommand("report", "cost graph and bottleneck");
  report->add_option("--model", model_path)->required();
  report->add_option("--library", library_path);
  report->add_option("--space", space_path)->required();
  report->add_option("--op", op_name);
  report->add_option("--design", design_path)->required();
  report->add_option("--schedule", schedule_path)->required();
  report->add_option("--objective", objective)
      ->check(CLI::IsMember({"latency", "energy"}));
  add_common(report);

  CLI::App* faults = app.add_subcommand("faults", "reliability experiments");
  faults->require_subcommand(1);
  auto add_fault_common = [&](CLI::App* c) {
    c->add_option("--rows", rows);
    c->add_option("--cols", cols);
    c->add_option("--pe-rate", pe_rate, "per-PE stuck-MAC probability");
    c->add_option("--mem-ber", mem_ber, "weight-memory bit error rate");
    add_seed(c);
    add_common(c);
  };
  CLI::App* f_inject = faults->add_subcommand("inject", "accuracy under faults");
  add_fault_common(f_inject);
  CLI::App* f_map = faults->add_subcommand("map", "fault-aware column mapping");
  add_fault_common(f_map);
  CLI::App* f_retrain = faults->add_subcommand("retrain", "fault-aware retraining");
  add_fault_common(f_retrain);
  CLI::App* f_sweep = faults->add_subcommand("sweep", "rate sweep across seeds");
  f_sweep->add_option("--rates", rates_csv, "comma-separated PE fault rates");
  f_sweep->add_option("--trials", sweep_seeds, "seeds per rate");
  add_fault_common(f_sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*explore) {
      if (budget > 0 && !seed_set)
        throw InputError("--seed is required for budgeted search");
      auto spec = load_space(space_path, library_path);
      auto nest = pick_nest(model_path, op_name);
      dse::SearchOptions opt;
      opt.objective = objective;
      opt.constraints = parse_constraints(constraints);
      for (const auto& [m, v] : spec.constraints.bounds)
        if (!opt.constraints.count(m)) opt.constraints[m] = v;
      opt.budget = budget;
      opt.seed = seed;
      opt.jobs = jobs;
      dse::SearchResult res;
      if (method == "random")
        res = dse::random_search(spec, nest, opt);
      else if (method == "anneal")
        res = dse::simulated_annealing(spec, nest, opt, 1.0, 0.98);
      else
        res = dse::explore(spec, nest, opt);
      json j = res.to_json();
      std::ostringstream sum;
      sum << "front " << res.front.size() << " points, " << res.evaluations
          << " evaluations" << (res.exhaustive ? " (exhaustive)" : "");
      if (!out_dir.empty()) {
        spit(fs::path(out_dir) / "result.json", j.dump(2) + "\n");
        std::ostringstream csv;
        csv << "id,latency,energy,area,edp\n";
        for (const auto& p : res.front.points())
          csv << p.id << "," << p.report.latency_cycles << "," << p.report.energy
              << "," << p.report.area << "," << p.report.edp() << "\n";
        spit(fs::path(out_dir) / "front.csv", csv.str());
        if (res.best)
          spit(fs::path(out_dir) / "best_design.json",
               design::serialize_design(res.best->design) + "\n");
        if (res.best)
          spit(fs::path(out_dir) / "best_schedule.json",
               res.best->schedule.serialize() + "\n");
      }
      if (as_json)
        std::cout << j.dump(2) << "\n";
      else
        std::cout << sum.str() << "\n";
      return res.front.empty() ? 2 : 0;
    }

    if (*eval) {
      auto spec = load_space(space_path, library_path);
      auto nest = pick_nest(model_path, op_name);
      auto d = design::parse_design(slurp(design_path));
      auto s = mapping::Schedule::parse(slurp(schedule_path));
      auto r = cost::evaluate_cost(d, s, nest, spec.library);
      json j = r.to_json();
      bool feasible = true;
      for (const auto& [m, v] : parse_constraints(constraints))
        if (r.metric(m) > v + 1e-9) feasible = false;
      j["feasible"] = feasible;
      std::ostringstream sum;
      sum << cost::CostReport::csv_header() << "\n" << r.csv_row();
      emit(j, out_dir, "report.json", as_json, sum.str());
      return feasible ? 0 : 2;
    }

    if (*mapspace) {
      auto spec = load_space(space_path, library_path);
      auto nest = pick_nest(model_path, op_name);
      auto d = design::parse_design(slurp(design_path));
      auto ms = mapping::formulate_mapping_space(nest, d, spec.library);
      json j;
      j["raw_size"] = ms.raw_size;
      j["valid_schedules"] = mapping::count_schedules(ms);
      json listed = json::array();
      long n = 0;
      mapping::for_each_schedule(ms, [&](const mapping::Schedule& s) {
        listed.push_back(json::parse(s.serialize()));
        return ++n < limit;
      });
      j["schedules"] = listed;
      std::ostringstream sum;
      sum << "raw " << ms.raw_size << ", valid " << j["valid_schedules"].get<long>();
      return emit(j, out_dir, "mapspace.json", as_json, sum.str());
    }

    if (*report) {
      auto spec = load_space(space_path, library_path);
      auto nest = pick_nest(model_path, op_name);
      auto d = design::parse_design(slurp(design_path));
      auto s = mapping::Schedule::parse(slurp(schedule_path));
      auto cg = cost::build_cost_graph(d, s, nest, spec.library);
      auto diag = cost::identify_bottleneck(cg, objective);
      json j;
      j["totals"] = cg.totals.to_json();
      json items = json::array();
      for (const auto& it : cg.items) {
        json ij{{"id", it.id}, {"latency", it.latency}, {"energy", it.energy},
                {"area", it.area}, {"fit", it.fit}};
        json gov = json::array();
        for (const auto& [p, why] : it.governing) gov.push_back({{"param", p}, {"why", why}});
        ij["governing"] = gov;
        items.push_back(ij);
      }
      j["items"] = items;
      json mits = json::array();
      for (const auto& [p, why] : diag.mitigations)
        mits.push_back({{"param", p}, {"why", why}});
      j["bottleneck"] = {{"dominant", diag.dominant}, {"ratio", diag.ratio},
                         {"mitigations", mits}};
      std::ostringstream sum;
      sum << "bottleneck " << diag.dominant << " (ratio "
          << (std::isinf(diag.ratio) ? std::string("inf")
                                     : std::to_string(diag.ratio))
          << ")";
      return emit(j, out_dir, "report.json", as_json, sum.str());
    }

    if (*faults) {
      if (!seed_set) throw InputError("--seed is required for faults commands");
      Bench b = make_bench(seed);
      if (*f_sweep) {
        std::vector<double> rates;
        std::stringstream ss(rates_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) rates.push_back(std::stod(tok));
        std::ostringstream csv;
        csv << "rate,seed,clean,unprotected,fap,remap_fap,retrain,ranger\n";
        double clean = b.qnet.accuracy(b.test);
        rel::RangeBounds rb = rel::profile_ranges(b.qnet, b.train);
        for (double rate : rates) {
          for (int t = 0; t < sweep_seeds; ++t) {
            uint64_t fseed = Rng::derive(seed, 1000 + t);
            rel::FaultMap fm = rel::generate_fault_map(rows, cols, rate, mem_ber,
                                                       b.qnet.weight_count(), 8, fseed);
            rel::Mitigations none;
            rel::Mitigations fap;
            fap.fap = true;
            rel::Mitigations remap = fap;
            remap.col_map = column_map_for(b.qnet, fm);
            rel::Mitigations ranger;
            ranger.bounds = rb;
            nn::TinyNet rt = rel::fault_aware_retrain(
                b.net, b.train, fm, *remap.col_map, 10, 0.05f, 16,
                Rng::derive(fseed, 7));
            double acc_rt = rel::mapped_accuracy(nn::quantize_net(rt), b.test, fm, remap);
            csv << rate << "," << t << "," << clean << ","
                << rel::mapped_accuracy(b.qnet, b.test, fm, none) << ","
                << rel::mapped_accuracy(b.qnet, b.test, fm, fap) << ","
                << rel::mapped_accuracy(b.qnet, b.test, fm, remap) << ","
                << acc_rt << ","
                << rel::mapped_accuracy(b.qnet, b.test, fm, ranger) << "\n";
          }
        }
        if (!out_dir.empty()) spit(fs::path(out_dir) / "sweep.csv", csv.str());
        std::cout << csv.str();
        return 0;
      }

      rel::FaultMap fm = rel::generate_fault_map(rows, cols, pe_rate, mem_ber,
                                                 b.qnet.weight_count(), 8,
                                                 Rng::derive(seed, 1));
      if (*f_inject) {
        rel::Mitigations none;
        json j;
        j["fault_map"] = fm.to_json();
        j["clean_accuracy"] = b.qnet.accuracy(b.test);
        j["faulty_accuracy"] = rel::mapped_accuracy(b.qnet, b.test, fm, none);
        std::ostringstream sum;
        sum << "clean " << j["clean_accuracy"].get<double>() << ", faulty "
            << j["faulty_accuracy"].get<double>();
        return emit(j, out_dir, "inject.json", as_json, sum.str());
      }
      if (*f_map) {
        auto cmap = column_map_for(b.qnet, fm);
        rel::Mitigations fap;
        fap.fap = true;
        rel::Mitigations remap = fap;
        remap.col_map = cmap;
        json j;
        j["fault_map"] = fm.to_json();
        j["column_map"] = cmap;
        j["fap_accuracy"] = rel::mapped_accuracy(b.qnet, b.test, fm, fap);
        j["remap_accuracy"] = rel::mapped_accuracy(b.qnet, b.test, fm, remap);
        std::ostringstream sum;
        sum << "fap " << j["fap_accuracy"].get<double>() << ", remapped "
            << j["remap_accuracy"].get<double>();
        return emit(j, out_dir, "map.json", as_json, sum.str());
      }
      if (*f_retrain) {
        auto cmap = column_map_for(b.qnet, fm);
        rel::Mitigations remap;
        remap.fap = true;
        remap.col_map = cmap;
        nn::TinyNet rt = rel::fault_aware_retrain(b.net, b.train, fm, cmap, 10,
                                                  0.05f, 16, Rng::derive(seed, 7));
        json j;
        j["before"] = rel::mapped_accuracy(b.qnet, b.test, fm, remap);
        j["after"] = rel::mapped_accuracy(nn::quantize_net(rt), b.test, fm, remap);
        std::ostringstream sum;
        sum << "before " << j["before"].get<double>() << ", after "
            << j["after"].get<double>();
        return emit(j, out_dir, "retrain.json", as_json, sum.str());
      }
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
