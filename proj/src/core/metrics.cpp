#include "dag_grow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dag_grow/error.hpp"

namespace daggrow {

std::string_view to_string(FlopPhase phase) {
  switch (phase) {
    case FlopPhase::forward: return "forward";
    case FlopPhase::backward: return "backward";
    case FlopPhase::solver: return "solver";
    case FlopPhase::candidate: return "candidate";
    case FlopPhase::training: return "training";
    case FlopPhase::evaluation: return "evaluation";
  }
  return "?";
}

std::int64_t flops_forward(const DagNetwork& net, std::int64_t batch_size) {
  std::int64_t total = 0;
  std::vector<bool> computed(net.nodes().size(), false);
  for (const auto& e : net.edges()) {
    total += flops_gemm(batch_size, e.weight.rows(), e.weight.cols());
    computed[net.node_index(e.dst)] = true;
  }
  for (std::size_t i = 0; i < computed.size(); ++i)
    if (computed[i]) total += net.nodes()[i].width * batch_size;
  return total;
}

std::int64_t flops_backward(const DagNetwork& net, std::int64_t batch_size) {
  return 2 * flops_forward(net, batch_size);
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw DataError(where + ": not a number: '" + s + "'");
  return v;
}

std::int64_t parse_int(const std::string& s, const std::string& where) {
  char* end = nullptr;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') throw DataError(where + ": not an integer: '" + s + "'");
  return v;
}

}  // namespace

std::string metrics_csv_header() {
  return "step,epoch,split,loss,accuracy,params,candidates,flops_cum,wall_s";
}

std::string metrics_csv_text(const RunMetrics& run) {
  std::ostringstream out;
  out << metrics_csv_header() << '\n';
  for (const auto& r : run.rows) {
    out << r.step << ',' << r.epoch << ',' << r.split << ',' << fmt_double(r.loss) << ','
        << fmt_double(r.accuracy) << ',' << r.params << ',' << r.candidates << ',' << r.flops_cum
        << ',' << fmt_double(r.wall_s) << '\n';
  }
  return out.str();
}

void write_metrics_csv(const RunMetrics& run, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << metrics_csv_text(run);
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != metrics_csv_header())
    throw DataError(path + ": unexpected metrics header");
  std::vector<MetricRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = path + ":" + std::to_string(line_no);
    if (cells.size() != 9) throw DataError(where + ": expected 9 columns");
    MetricRow r;
    r.step = static_cast<int>(parse_int(cells[0], where));
    r.epoch = static_cast<int>(parse_int(cells[1], where));
    r.split = cells[2];
    r.loss = parse_double(cells[3], where);
    r.accuracy = parse_double(cells[4], where);
    r.params = parse_int(cells[5], where);
    r.candidates = parse_int(cells[6], where);
    r.flops_cum = parse_int(cells[7], where);
    r.wall_s = parse_double(cells[8], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

// NaN/Inf are not representable in JSON; they travel as null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double read_num(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nan("");
  return j.at(key).get<double>();
}

json step_to_json(const StepRecord& s) {
  return {{"step", s.step},
          {"saturated", s.saturated},
          {"a_star", s.a_star},
          {"psi_max", num(s.psi_max)},
          {"hidden_nodes_before", s.hidden_nodes_before},
          {"candidates", s.candidates},
          {"candidate_flops", s.candidate_flops},
          {"flops_cum", s.flops_cum},
          {"params", s.params},
          {"selected",
           {{"kind", s.selected.kind},
            {"src", s.selected.src},
            {"dst", s.selected.dst},
            {"neurons", s.selected.neurons},
            {"gamma", num(s.selected.gamma)},
            {"est_loss_gr", num(s.selected.est_loss_gr)},
            {"criterion", num(s.selected.criterion)},
            {"param_delta", s.selected.param_delta}}}};
}

StepRecord step_from_json(const json& j) {
  StepRecord s;
  s.step = j.at("step").get<int>();
  s.saturated = j.at("saturated").get<bool>();
  s.a_star = j.at("a_star").get<int>();
  s.psi_max = read_num(j, "psi_max");
  s.hidden_nodes_before = j.value("hidden_nodes_before", 0);
  s.candidates = j.at("candidates").get<std::int64_t>();
  s.candidate_flops = j.at("candidate_flops").get<std::int64_t>();
  s.flops_cum = j.at("flops_cum").get<std::int64_t>();
  s.params = j.at("params").get<std::int64_t>();
  const json& sel = j.at("selected");
  s.selected.kind = sel.at("kind").get<std::string>();
  s.selected.src = sel.at("src").get<int>();
  s.selected.dst = sel.at("dst").get<int>();
  s.selected.neurons = sel.at("neurons").get<int>();
  s.selected.gamma = read_num(sel, "gamma");
  s.selected.est_loss_gr = read_num(sel, "est_loss_gr");
  s.selected.criterion = read_num(sel, "criterion");
  s.selected.param_delta = sel.at("param_delta").get<std::int64_t>();
  return s;
}

}  // namespace

std::string summary_to_json(const RunSummary& s) {
  json j;
  j["schema_version"] = s.schema_version;
  j["config"] = s.config;
  j["loss_kind"] = s.loss_kind;
  j["final_params"] = s.final_params;
  j["final_test_metric"] = num(s.final_test_metric);
  j["final_test_loss"] = num(s.final_test_loss);
  j["final_test_accuracy"] = num(s.final_test_accuracy);
  j["final_train_gr_loss"] = num(s.final_train_gr_loss);
  j["zero_predictor_loss"] = num(s.zero_predictor_loss);
  j["flops_total"] = s.flops_total;
  j["candidate_flops_total"] = s.candidate_flops_total;
  j["flops_by_phase"] = s.flops_by_phase;
  json steps = json::array();
  for (const auto& st : s.steps) steps.push_back(step_to_json(st));
  j["steps"] = std::move(steps);
  return j.dump(2);
}

RunSummary summary_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("summary is not valid JSON: ") + e.what());
  }
  try {
    RunSummary s;
    s.schema_version = j.at("schema_version").get<int>();
    if (s.schema_version != kMetricsSchemaVersion)
      throw DataError("metrics schema_version " + std::to_string(s.schema_version) +
                      " is not supported (expected " + std::to_string(kMetricsSchemaVersion) + ")");
    s.config = j.at("config").get<std::map<std::string, std::string>>();
    s.loss_kind = j.at("loss_kind").get<std::string>();
    s.final_params = j.at("final_params").get<std::int64_t>();
    s.final_test_metric = read_num(j, "final_test_metric");
    s.final_test_loss = read_num(j, "final_test_loss");
    s.final_test_accuracy = read_num(j, "final_test_accuracy");
    s.final_train_gr_loss = read_num(j, "final_train_gr_loss");
    s.zero_predictor_loss = read_num(j, "zero_predictor_loss");
    s.flops_total = j.at("flops_total").get<std::int64_t>();
    s.candidate_flops_total = j.at("candidate_flops_total").get<std::int64_t>();
    s.flops_by_phase = j.at("flops_by_phase").get<std::map<std::string, std::int64_t>>();
    for (const auto& st : j.at("steps")) s.steps.push_back(step_from_json(st));
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed summary: ") + e.what());
  }
}

void write_summary_json(const RunSummary& summary, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << summary_to_json(summary) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

RunSummary read_summary_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open summary file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return summary_from_json(buf.str());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

namespace {

std::string config_value(const RunSummary& s, const std::string& key) {
  auto it = s.config.find(key);
  return it == s.config.end() ? "?" : it->second;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void append(std::string& out, const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  out += buf;
}

}  // namespace

std::string report_table(const std::vector<RunSummary>& runs) {
  std::string out;
  if (runs.empty()) return out;

  append(out, "%-12s %8s %12s %14s %14s %16s %16s\n", "strategy", "seed", "params", "test_metric",
         "train_gr_loss", "flops_total", "candidate_flops");
  for (const auto& r : runs) {
    append(out, "%-12s %8s %12lld %14.6g %14.6g %16lld %16lld\n",
           config_value(r, "strategy").c_str(), config_value(r, "seed").c_str(),
           static_cast<long long>(r.final_params), r.final_test_metric, r.final_train_gr_loss,
           static_cast<long long>(r.flops_total), static_cast<long long>(r.candidate_flops_total));
  }

  std::set<std::string> strategies;
  for (const auto& r : runs) strategies.insert(config_value(r, "strategy"));
  out += "\n";
  append(out, "%-12s %6s %14s %14s %14s %16s %16s\n", "strategy", "runs", "metric_mean",
         "metric_std", "params_median", "flops_mean", "cand_flops_mean");
  for (const auto& s : strategies) {
    std::vector<double> metric, params;
    double flops = 0.0, cand = 0.0;
    for (const auto& r : runs) {
      if (config_value(r, "strategy") != s) continue;
      metric.push_back(r.final_test_metric);
      params.push_back(static_cast<double>(r.final_params));
      flops += static_cast<double>(r.flops_total);
      cand += static_cast<double>(r.candidate_flops_total);
    }
    const double n = static_cast<double>(metric.size());
    double mean = 0.0;
    for (double m : metric) mean += m;
    mean /= n;
    double var = 0.0;
    for (double m : metric) var += (m - mean) * (m - mean);
    const double sd = metric.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    append(out, "%-12s %6zu %14.6g %14.6g %14.6g %16.6g %16.6g\n", s.c_str(), metric.size(), mean, sd,
           median(params), flops / n, cand / n);
  }

  if (strategies.contains("whole") && strategies.size() > 1) {
    out += "\n";
    for (const auto& s : strategies) {
      if (s == "whole") continue;
      // Only the runs whose seeds also ran under the whole search space.
      double mine = 0.0, base = 0.0, mine_total = 0.0, base_total = 0.0;
      for (const auto& r : runs) {
        if (config_value(r, "strategy") != s) continue;
        for (const auto& w : runs) {
          if (config_value(w, "strategy") != "whole" ||
              config_value(w, "seed") != config_value(r, "seed"))
            continue;
          mine += static_cast<double>(r.candidate_flops_total);
          base += static_cast<double>(w.candidate_flops_total);
          mine_total += static_cast<double>(r.flops_total);
          base_total += static_cast<double>(w.flops_total);
          break;
        }
      }
      if (base > 0.0)
        append(out, "%s vs whole: candidate flop ratio %.4f (saving %.1f%%), total flop ratio %.4f\n",
               s.c_str(), mine / base, 100.0 * (1.0 - mine / base), mine_total / base_total);
    }
  }
  return out;
}

}  // namespace daggrow
