#include "delaypo/env_io.hpp"

#include <fstream>
#include <json.hpp>

namespace delaypo {

namespace {

using nlohmann::json;

json table_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index s = 0; s < m.rows(); ++s) {
    json row = json::array();
    for (Eigen::Index a = 0; a < m.cols(); ++a) row.push_back(m(s, a));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd table_from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                         const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw StructuralError(std::string(what) + ": wrong row count");
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw StructuralError(std::string(what) + ": wrong column count");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

}  // namespace

std::string to_json_string(const EnvWithCosts& ec) {
  const TabularMdp& m = ec.mdp;
  json doc;
  doc["S"] = m.S;
  doc["A"] = m.A;
  doc["H"] = m.H;
  doc["s_init"] = m.s_init;
  json p = json::array();
  for (int h = 0; h + 1 < m.H; ++h) {
    json per_s = json::array();
    for (int s = 0; s < m.S; ++s) {
      json per_a = json::array();
      for (int a = 0; a < m.A; ++a) {
        json dist = json::array();
        for (int sp = 0; sp < m.S; ++sp) dist.push_back(m.p[h](m.row(s, a), sp));
        per_a.push_back(std::move(dist));
      }
      per_s.push_back(std::move(per_a));
    }
    p.push_back(std::move(per_s));
  }
  doc["p"] = std::move(p);
  json costs = json::array();
  for (const auto& ck : ec.costs) {
    json per_h = json::array();
    for (int h = 0; h < m.H; ++h) per_h.push_back(table_to_json(ck.c[h]));
    costs.push_back(std::move(per_h));
  }
  doc["costs"] = std::move(costs);
  return doc.dump();
}

EnvWithCosts env_from_json_string(const std::string& text) {
  json doc = json::parse(text);
  const int S = doc.at("S").get<int>();
  const int A = doc.at("A").get<int>();
  const int H = doc.at("H").get<int>();
  const int s_init = doc.at("s_init").get<int>();
  const json& p = doc.at("p");
  if (static_cast<int>(p.size()) != H - 1)
    throw StructuralError("env json: expected H-1 kernel steps");
  std::vector<MatrixXd> kernel;
  kernel.reserve(H - 1);
  for (int h = 0; h + 1 < H; ++h) {
    MatrixXd ph(static_cast<Eigen::Index>(S) * A, S);
    const json& per_s = p[h];
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const json& dist = per_s.at(s).at(a);
        for (int sp = 0; sp < S; ++sp)
          ph(static_cast<Eigen::Index>(s) * A + a, sp) = dist.at(sp).get<double>();
      }
    kernel.push_back(std::move(ph));
  }
  EnvWithCosts out;
  out.mdp = TabularMdp(S, A, H, s_init, std::move(kernel));
  for (const json& ck : doc.at("costs")) {
    std::vector<MatrixXd> tables;
    tables.reserve(H);
    for (int h = 0; h < H; ++h)
      tables.push_back(table_from_json(ck.at(h), S, A, "cost table"));
    out.costs.emplace_back(std::move(tables));
  }
  return out;
}

void save_env(const EnvWithCosts& ec, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << to_json_string(ec);
}

EnvWithCosts load_env(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return env_from_json_string(text);
}

}  // namespace delaypo
