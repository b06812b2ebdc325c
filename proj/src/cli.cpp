#include <poolsim/cli.hpp>

#include <poolsim/experiments.hpp>
#include <poolsim/serial.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace poolsim {

namespace {

scenario_spec load_with_overrides(const std::string& path,
                                  const std::vector<std::string>& overrides) {
   std::ifstream in(path);
   if (!in) throw error(fmt::format("cannot open scenario file '{}'", path));
   std::stringstream buffer;
   buffer << in.rdbuf();
   nlohmann::json doc = parse_scenario_document(buffer.str(), path);
   for (const std::string& assignment : overrides) apply_override(doc, assignment);
   return scenario_from_json(std::move(doc));
}

std::filesystem::path output_file(const std::string& out_dir, const std::string& name) {
   std::filesystem::path dir(out_dir.empty() ? "." : out_dir);
   std::filesystem::create_directories(dir);
   return dir / name;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
   std::ofstream out(path);
   if (!out) throw error(fmt::format("cannot write '{}'", path.string()));
   out << text;
   if (!out) throw error(fmt::format("write failed for '{}'", path.string()));
}

std::string csv_quote(const std::string& field) {
   if (field.find_first_of(",\"\n") == std::string::npos) return field;
   std::string quoted = "\"";
   for (char c : field) {
      if (c == '"') quoted += '"';
      quoted += c;
   }
   quoted += '"';
   return quoted;
}

void write_csv(const std::filesystem::path& path,
               const std::vector<std::array<std::string, 3>>& rows) {
   std::string text = "scenario,metric,value\n";
   for (const auto& row : rows) {
      text += csv_quote(row[0]);
      text += ',';
      text += csv_quote(row[1]);
      text += ',';
      text += csv_quote(row[2]);
      text += '\n';
   }
   write_text(path, text);
}

void write_trace(const std::filesystem::path& path, const std::vector<trace_event>& events) {
   std::string text;
   for (const trace_event& ev : events) {
      text += trace_event_to_json(ev).dump();
      text += '\n';
   }
   write_text(path, text);
}

int run_command(const std::string& scenario_path, const std::vector<std::string>& overrides,
                std::uint64_t runs_flag, bool runs_set,
                std::optional<std::uint64_t> seed_base, const std::string& out_dir,
                const std::string& emit) {
   const scenario_spec spec = load_with_overrides(scenario_path, overrides);
   const std::uint64_t runs = runs_set ? runs_flag : spec.analysis.runs;
   const bool want_trace = emit == "trace" || emit == "both";
   const bool want_report = emit == "report" || emit == "both";

   std::function<void(const run_result&)> per_run;
   if (want_trace) {
      per_run = [&](const run_result& r) {
         const auto path =
             output_file(out_dir, fmt::format("{}.run{}.trace.jsonl", spec.name, r.run_index));
         write_trace(path, r.events);
      };
   }

   const nlohmann::json report = scenario_report(spec, runs, seed_base, per_run);
   if (want_report) {
      const auto report_path = output_file(out_dir, spec.name + ".report.json");
      write_text(report_path, report.dump(2) + "\n");
      const auto csv_path = output_file(out_dir, spec.name + ".summary.csv");
      write_csv(csv_path, report_csv_rows(spec.name, report));
      std::cout << "report: " << report_path.string() << "\n";
   }

   const auto& liveness = report.at("liveness");
   const auto& security = report.at("security");
   std::cout << fmt::format("scenario {} over {} runs: live_window={} violating_runs={}\n",
                            spec.name, runs,
                            liveness.at("live_window").is_null()
                                ? std::string("none")
                                : liveness.at("live_window").dump(),
                            security.at("violating_runs").dump());
   return exit_ok;
}

int cap_command(const std::string& scenario_path, const std::vector<std::string>& overrides,
                std::uint64_t runs, std::optional<std::uint64_t> seed_base,
                const std::string& out_dir) {
   const scenario_spec spec = load_with_overrides(scenario_path, overrides);
   cap_params params;
   params.runs = runs;
   const cap_report report = run_cap_experiment(spec, params, seed_base);

   const nlohmann::json j = cap_to_json(report);
   const auto path = output_file(out_dir, spec.name + ".cap.json");
   write_text(path, j.dump(2) + "\n");
   std::cout << "cap report: " << path.string() << "\n";

   if (!report.t0) {
      std::cout << fmt::format("calibration failed: no timeslot reaches confirmation "
                               "frequency {} on both sides over {} runs\n",
                               params.confirm_frequency, runs);
      return exit_experiment;
   }
   std::cout << fmt::format(
       "t0={} (confirm freq a={:.3f} b={:.3f}); incompatible confirmations at t0 in "
       "{:.1f}% of partitioned runs\n",
       *report.t0, report.freq_a_at_t0, report.freq_b_at_t0,
       100.0 * report.incompatible_at_t0);
   if (!report.passed) {
      std::cout << fmt::format("FAIL: incompatibility fraction {:.3f} does not exceed {:.3f}\n",
                               report.incompatible_at_t0, params.incompat_frequency);
      return exit_experiment;
   }
   std::cout << "PASS: partitioned executions confirm incompatible blocks\n";
   return exit_ok;
}

int prop1_command(double lambda, double balance_amount, std::uint64_t y_max,
                  std::uint32_t ext_no, std::uint64_t trials,
                  const std::vector<std::uint64_t>& requests, const std::string& out_dir) {
   std::cout << "y,p_any,ratio\n";
   for (std::uint64_t y = 1; y <= y_max; ++y) {
      const prop1_point point = prop1_analytic(lambda * balance_amount, y);
      std::cout << fmt::format("{},{:.12g},{:.12g}\n", y, point.p_any, point.ratio);
   }
   if (trials == 0) return exit_ok;

   prop1_mc_config config;
   config.lambda = lambda;
   config.ext_no = ext_no;
   config.trials = trials;
   std::size_t i = 0;
   for (std::uint64_t x : requests) {
      const key_id key = fmt::format("k{}", i++);
      config.x_of[key] = static_cast<std::uint32_t>(x);
      config.balances[key] = balance_amount;
   }
   const prop1_mc_report report = prop1_montecarlo(config);
   const nlohmann::json j = prop1_mc_to_json(report);
   const auto path = output_file(out_dir, "prop1.mc.json");
   write_text(path, j.dump(2) + "\n");
   std::cout << fmt::format("mc: trials={} fit_constant={:.6g} max_residual={:.6g} -> {}\n",
                            trials, report.fit_constant, report.max_residual, path.string());
   for (const prop1_key_stats& s : report.keys) {
      std::cout << fmt::format("  {}: y={} p_hat={:.6g} p_analytic={:.6g} z={:+.2f}\n", s.key,
                               s.requests_per_slot, s.p_hat, s.p_analytic, s.z);
   }
   return exit_ok;
}

int dispatch(int argc, const char* const* argv) {
   CLI::App app{"deterministic timeslot simulator for permissionless protocols"};
   app.require_subcommand(1);

   std::string scenario_path;
   std::vector<std::string> overrides;
   std::uint64_t runs = 0;
   std::optional<std::uint64_t> seed_base;
   std::string out_dir = ".";
   std::string emit = "report";

   CLI::App* validate = app.add_subcommand("validate", "parse and validate a scenario file");
   validate->add_option("--scenario", scenario_path, "scenario file")->required();
   validate->add_option("--set", overrides, "override a scenario field (a.b.c=value)");

   CLI::App* run = app.add_subcommand("run", "execute a scenario and report on it");
   run->add_option("--scenario", scenario_path, "scenario file")->required();
   auto* runs_opt = run->add_option("--runs", runs, "number of runs");
   run->add_option("--seed-base", seed_base, "override the scheduler seed base");
   run->add_option("--out", out_dir, "output directory");
   run->add_option("--emit", emit, "what to write")
       ->check(CLI::IsMember({"trace", "report", "both"}));
   run->add_option("--set", overrides, "override a scenario field (a.b.c=value)");

   CLI::App* cap = app.add_subcommand("cap", "paired-execution confirmation experiment");
   cap->add_option("--scenario", scenario_path, "two-user scenario file")->required();
   std::uint64_t cap_runs = 100;
   cap->add_option("--runs", cap_runs, "number of paired runs");
   cap->add_option("--seed-base", seed_base, "override the scheduler seed base");
   cap->add_option("--out", out_dir, "output directory");
   cap->add_option("--set", overrides, "override a scenario field (a.b.c=value)");

   CLI::App* prop1 = app.add_subcommand("prop1", "rate-limited grant analysis");
   double lambda = 1e-3;
   double balance_amount = 1.0;
   std::uint64_t y_max = 20;
   std::uint32_t ext_no = 10;
   std::uint64_t trials = 0;
   std::vector<std::uint64_t> requests{1, 2, 4, 8};
   prop1->add_option("--lambda", lambda, "per-unit grant probability");
   prop1->add_option("--balance", balance_amount, "balance of every simulated key");
   prop1->add_option("--y-max", y_max, "largest request count in the table");
   prop1->add_option("--ext-no", ext_no, "distinct extensions per timeslot");
   prop1->add_option("--trials", trials, "simulated timeslots (0: table only)");
   prop1->add_option("--requests", requests, "per-key requests per timeslot")
       ->delimiter(',');
   prop1->add_option("--out", out_dir, "output directory");

   try {
      app.parse(argc, argv);
   } catch (const CLI::ParseError& e) {
      return app.exit(e) == 0 ? exit_ok : exit_config;
   }

   try {
      if (validate->parsed()) {
         const scenario_spec spec = load_with_overrides(scenario_path, overrides);
         std::cout << fmt::format("ok: {} ({} users, duration {}, config {})\n", spec.name,
                                  spec.users.size(), spec.duration,
                                  spec.config_digest.hex());
         return exit_ok;
      }
      if (run->parsed()) {
         return run_command(scenario_path, overrides, runs, runs_opt->count() > 0, seed_base,
                            out_dir, emit);
      }
      if (cap->parsed()) {
         return cap_command(scenario_path, overrides, cap_runs, seed_base, out_dir);
      }
      if (prop1->parsed()) {
         return prop1_command(lambda, balance_amount, y_max, ext_no, trials, requests, out_dir);
      }
   } catch (const indistinguishability_error& e) {
      std::cerr << "experiment failure: " << e.what() << "\n";
      return exit_experiment;
   } catch (const parse_error& e) {
      std::cerr << fmt::format("error: {} (line {}, column {})\n", e.what(), e.line, e.column);
      return exit_config;
   } catch (const schema_error& e) {
      std::cerr << fmt::format("error: {} (at {})\n", e.what(), e.field);
      return exit_config;
   } catch (const error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return exit_config;
   } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return exit_config;
   }
   return exit_config;
}

} // namespace

int cli_main(int argc, const char* const* argv) { return dispatch(argc, argv); }

int cli_main(const std::vector<std::string>& args) {
   std::vector<std::string> with_program;
   with_program.reserve(args.size() + 1);
   with_program.push_back("poolsim");
   with_program.insert(with_program.end(), args.begin(), args.end());
   std::vector<const char*> argv;
   argv.reserve(with_program.size());
   for (const std::string& arg : with_program) argv.push_back(arg.c_str());
   return dispatch(static_cast<int>(argv.size()), argv.data());
}

} // namespace poolsim
