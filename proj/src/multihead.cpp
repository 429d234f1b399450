#include "shapegrasp/multihead.hpp"

#include <json.hpp>

#include <cstdio>
#include <sstream>

namespace shapegrasp {

namespace {

using nlohmann::json;

template <int N>
json vec_json(const Eigen::Matrix<double, N, 1>& v) {
  json a = json::array();
  for (int i = 0; i < N; ++i) a.push_back(v[i]);
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N))
    throw Error(ErrorKind::InvalidArgument,
                std::string(what) + " must have " + std::to_string(N) + " entries");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = j[i].get<double>();
  return v;
}

json parse_array(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("bad JSON: ") + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorKind::InvalidArgument, "expected a JSON list");
  return doc;
}

}  // namespace

std::string prediction_to_json(const MultiHeadPrediction<double>& pred) {
  json arr = json::array();
  for (const auto& h : pred)
    arr.push_back({{"q", vec_json<12>(h.q)},
                   {"dh", vec_json<6>(h.dh)},
                   {"s", h.s},
                   {"logit", h.logit}});
  return arr.dump(2);
}

MultiHeadPrediction<double> prediction_from_json(const std::string& text) {
  const json arr = parse_array(text);
  MultiHeadPrediction<double> pred;
  try {
    for (const auto& j : arr) {
      HeadOutput<double> h;
      h.q = vec_from<12>(j.at("q"), "q");
      h.dh = vec_from<6>(j.at("dh"), "dh");
      h.s = j.at("s").get<double>();
      h.logit = j.at("logit").get<double>();
      pred.push_back(h);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("bad head: ") + e.what());
  }
  require_heads(pred);
  return pred;
}

std::string labels_to_json(std::span<const GroundTruthGrasp<double>> labels) {
  json arr = json::array();
  for (const auto& g : labels)
    arr.push_back({{"q", vec_json<12>(g.q)}, {"dh", vec_json<6>(g.dh)}, {"s", g.s}});
  return arr.dump(2);
}

std::vector<GroundTruthGrasp<double>> labels_from_json(const std::string& text) {
  const json arr = parse_array(text);
  std::vector<GroundTruthGrasp<double>> out;
  try {
    for (const auto& j : arr) {
      GroundTruthGrasp<double> g;
      g.q = vec_from<12>(j.at("q"), "q");
      g.dh = vec_from<6>(j.at("dh"), "dh");
      g.s = j.at("s").get<double>();
      out.push_back(g);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("bad label: ") + e.what());
  }
  return out;
}

std::string loss_history_csv(std::span<const double> history) {
  std::ostringstream out;
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, history[i]);
    out << buf;
  }
  return out.str();
}

}  // namespace shapegrasp
