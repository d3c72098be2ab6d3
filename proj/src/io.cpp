// SPDX-License-Identifier: Apache-2.0
#include "fusion/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fusion {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header.size()) throw DimensionMismatch("csv row", header.size(), row.size());
  rows.push_back(std::move(row));
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void append_line(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  out += '\n';
}

std::vector<double> require_numbers(const Json& j, const char* what) {
  if (!j.is_array()) throw InvalidArgument(std::string("checkpoint: ") + what + " must be an array");
  return j.get<std::vector<double>>();
}

std::vector<std::size_t> require_widths(const Json& j) {
  if (!j.is_array()) throw InvalidArgument("checkpoint: widths must be an array");
  return j.get<std::vector<std::size_t>>();
}

}  // namespace

std::string CsvTable::str() const {
  std::string out;
  append_line(out, header);
  for (const auto& row : rows) append_line(out, row);
  return out;
}

CsvTable samples_table(const std::vector<Vec>& samples, const std::vector<std::string>& group_labels,
                       const std::string& group_column) {
  CsvTable t;
  const bool grouped = !group_labels.empty();
  if (grouped && group_labels.size() != samples.size()) {
    throw DimensionMismatch("samples_table: labels", samples.size(), group_labels.size());
  }
  if (grouped) t.header.push_back(group_column);
  t.header.push_back("sample");
  const std::size_t d = samples.empty() ? 0 : samples.front().size();
  for (std::size_t j = 0; j < d; ++j) t.header.push_back("x" + std::to_string(j));
  for (std::size_t n = 0; n < samples.size(); ++n) {
    std::vector<std::string> row;
    if (grouped) row.push_back(group_labels[n]);
    row.push_back(std::to_string(n));
    for (double v : samples[n]) row.push_back(format_double(v));
    t.add_row(std::move(row));
  }
  return t;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const std::filesystem::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string scatter_svg(const std::vector<ScatterSeries>& series, const std::string& title) {
  static const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  const double W = 480, H = 420, left = 60, top = 40, plot = 320;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << left << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot << "\" height=\"" << plot
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double f = k / 4.0;
    s << "<text x=\"" << left + f * plot << "\" y=\"" << top + plot + 16
      << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << f << "</text>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << top + plot - f * plot + 3
      << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" << f << "</text>\n";
  }
  s << "<text x=\"" << left + plot / 2 << "\" y=\"" << top + plot + 34
    << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">identity score</text>\n";
  s << "<text x=\"16\" y=\"" << top + plot / 2 << "\" font-family=\"sans-serif\" font-size=\"12\" "
    << "text-anchor=\"middle\" transform=\"rotate(-90 16 " << top + plot / 2 << ")\">style score</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* colour = kColours[i % std::size(kColours)];
    for (const auto& [x, y] : series[i].points) {
      s << "<circle cx=\"" << left + x * plot << "\" cy=\"" << top + plot - y * plot << "\" r=\"4\" fill=\""
        << colour << "\" fill-opacity=\"0.7\"/>\n";
    }
    const double ly = top + 12 + 16.0 * static_cast<double>(i);
    s << "<circle cx=\"" << left + plot + 12 << "\" cy=\"" << ly - 4 << "\" r=\"4\" fill=\"" << colour << "\"/>\n";
    s << "<text x=\"" << left + plot + 20 << "\" y=\"" << ly << "\" font-family=\"sans-serif\" font-size=\"10\">"
      << series[i].name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

Json world_to_json(const MixtureWorld& world) {
  Json styles = Json::array();
  for (const StyleMap& m : world.styles()) styles.push_back(Json{{"A", m.A}, {"b", m.b}});
  return Json{{"dim", world.dim()},
              {"variance", world.variance()},
              {"identity_means", world.identity_means()},
              {"styles", styles}};
}

MixtureWorld world_from_json(const Json& doc) {
  std::vector<StyleMap> styles;
  for (const Json& s : doc.at("styles")) styles.push_back(StyleMap{require_numbers(s.at("A"), "A"), require_numbers(s.at("b"), "b")});
  return MixtureWorld(doc.at("dim").get<std::size_t>(), doc.at("variance").get<double>(),
                      doc.at("identity_means").get<std::vector<Vec>>(), std::move(styles));
}

Json schedule_to_json(const DiffusionSchedule& schedule) {
  return Json{{"T", schedule.steps()}, {"beta_start", schedule.beta_start()}, {"beta_end", schedule.beta_end()}};
}

DiffusionSchedule schedule_from_json(const Json& doc) {
  return DiffusionSchedule::linear(doc.at("T").get<int>(), doc.at("beta_start").get<double>(),
                                   doc.at("beta_end").get<double>());
}

Json denoiser_to_json(const ToyDenoiser& d) {
  const auto params = d.net().params();
  return Json{{"kind", "toy_denoiser"},
              {"data_dim", d.dim()},
              {"identity_dim", d.identity_dim()},
              {"text_dim", d.text_dim()},
              {"hidden", d.hidden()},
              {"widths", d.net().widths()},
              {"data_scale", d.data_scale()},
              {"schedule", schedule_to_json(d.schedule())},
              {"params", std::vector<double>(params.begin(), params.end())}};
}

ToyDenoiser denoiser_from_json(const Json& doc) {
  try {
    ToyDenoiser d(doc.at("data_dim").get<std::size_t>(), doc.at("identity_dim").get<std::size_t>(),
                  doc.at("text_dim").get<std::size_t>(), require_widths(doc.at("hidden")),
                  schedule_from_json(doc.at("schedule")));
    if (require_widths(doc.at("widths")) != d.net().widths()) throw InvalidArgument("checkpoint: layer widths disagree");
    d.net().set_params(require_numbers(doc.at("params"), "params"));
    d.set_data_scale(doc.at("data_scale").get<double>());
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("denoiser checkpoint: ") + e.what());
  }
}

Json encoder_to_json(const ToyPromptNet& net, const Json& training_snapshot) {
  const auto params = net.net().params();
  return Json{{"kind", "toy_promptnet"},
              {"data_dim", net.data_dim()},
              {"embed_dim", net.embed_dim()},
              {"hidden", net.hidden()},
              {"widths", net.net().widths()},
              {"schedule", schedule_to_json(net.schedule())},
              {"training", training_snapshot},
              {"params", std::vector<double>(params.begin(), params.end())}};
}

ToyPromptNet encoder_from_json(const Json& doc) {
  try {
    ToyPromptNet net(doc.at("data_dim").get<std::size_t>(), doc.at("embed_dim").get<std::size_t>(),
                     require_widths(doc.at("hidden")), schedule_from_json(doc.at("schedule")));
    if (require_widths(doc.at("widths")) != net.net().widths()) throw InvalidArgument("checkpoint: layer widths disagree");
    net.net().set_params(require_numbers(doc.at("params"), "params"));
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("encoder checkpoint: ") + e.what());
  }
}

Json record_to_json(const RunRecord& record, const std::string& mode) {
  Json config = record.config_json.empty() ? Json::object() : Json::parse(record.config_json);
  Json metrics = Json::array();
  for (const MetricRow& row : record.metrics) {
    Json values = Json::object();
    for (const auto& [k, v] : row.values) values[k] = std::isfinite(v) ? Json(v) : Json(format_double(v));
    metrics.push_back(Json{{"label", row.label}, {"values", values}});
  }
  Json j{{"format", "fusion-run-record/1"},
         {"mode", mode},
         {"seed", record.seed},
         {"config", config},
         {"metrics", metrics},
         {"samples", record.samples}};
  if (!record.trajectories.empty()) j["trajectories"] = record.trajectories;
  return j;
}

}  // namespace fusion
