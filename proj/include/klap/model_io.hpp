#pragma once

// Model files: a JSON document {name?, n, m, A, B, C, D, metadata?} with
// row-major arrays (flat or nested by rows), or a plain-text file with four
// blocks headed by "A", "B", "C", "D". Needs nlohmann json.hpp on the
// include path.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "klap/lti_system.hpp"

namespace klap {

struct ModelFile {
  std::optional<std::string> name;
  std::map<std::string, std::string> metadata;
  Matrix A, B, C, D;
};

struct LoadedModel {
  StateSpaceSystem system;
  std::optional<std::string> name;
  std::map<std::string, std::string> metadata;
  std::vector<std::string> warnings;
};

namespace detail {

inline Matrix read_json_matrix(const nlohmann::json& doc, const char* field, Eigen::Index rows,
                               Eigen::Index cols) {
  const std::string where = std::string("field '") + field + "'";
  if (!doc.contains(field)) throw Error(ErrorCode::ParseError, where + ": missing");
  const auto& node = doc.at(field);
  std::vector<double> flat;
  auto take = [&](const nlohmann::json& v) {
    if (!v.is_number()) throw Error(ErrorCode::ParseError, where + ": non-numeric entry");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw Error(ErrorCode::ParseError, where + ": non-finite entry");
    flat.push_back(x);
  };
  if (node.is_number()) {
    take(node);
  } else if (node.is_array()) {
    const bool nested = !node.empty() && node.front().is_array();
    if (nested) {
      if (static_cast<Eigen::Index>(node.size()) != rows)
        throw Error(ErrorCode::ParseError, where + ": expected " + std::to_string(rows) +
                                               " rows, got " + std::to_string(node.size()));
      for (const auto& row : node) {
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
          throw Error(ErrorCode::ParseError,
                      where + ": every row needs " + std::to_string(cols) + " entries");
        for (const auto& v : row) take(v);
      }
    } else {
      for (const auto& v : node) take(v);
    }
  } else {
    throw Error(ErrorCode::ParseError, where + ": expected an array");
  }
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
    throw Error(ErrorCode::ParseError, where + ": expected " + std::to_string(rows * cols) +
                                           " entries, got " + std::to_string(flat.size()));
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = flat[static_cast<std::size_t>(i * cols + j)];
  return M;
}

inline Eigen::Index read_dimension(const nlohmann::json& doc, const char* field) {
  if (!doc.contains(field) || !doc.at(field).is_number_integer() || doc.at(field).get<long long>() <= 0)
    throw Error(ErrorCode::ParseError, std::string("field '") + field + "': expected a positive integer");
  return static_cast<Eigen::Index>(doc.at(field).get<long long>());
}

inline ModelFile parse_json_model(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, "model must be a JSON object");
  const Eigen::Index n = read_dimension(doc, "n");
  const Eigen::Index m = read_dimension(doc, "m");
  ModelFile f;
  f.A = read_json_matrix(doc, "A", n, n);
  f.B = read_json_matrix(doc, "B", n, m);
  f.C = read_json_matrix(doc, "C", m, n);
  f.D = read_json_matrix(doc, "D", m, m);
  if (doc.contains("name")) {
    if (!doc["name"].is_string()) throw Error(ErrorCode::ParseError, "field 'name': expected a string");
    f.name = doc["name"].get<std::string>();
  }
  if (doc.contains("metadata")) {
    const auto& md = doc["metadata"];
    if (!md.is_object()) throw Error(ErrorCode::ParseError, "field 'metadata': expected an object");
    for (const auto& [k, v] : md.items())
      f.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return f;
}

inline ModelFile parse_text_model(const std::string& text) {
  std::map<std::string, std::vector<std::vector<double>>> blocks;
  std::string current;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    for (std::string t; ls >> t;) tokens.push_back(t);
    if (tokens.empty()) continue;
    if (tokens.size() == 1 && (tokens[0] == "A" || tokens[0] == "B" || tokens[0] == "C" ||
                               tokens[0] == "D")) {
      current = tokens[0];
      if (blocks.count(current))
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(lineno) + ": duplicate block " + current);
      blocks[current];
      continue;
    }
    if (current.empty())
      throw Error(ErrorCode::ParseError,
                  "line " + std::to_string(lineno) + ": data before the first block header");
    std::vector<double> row;
    for (const auto& t : tokens) {
      double x = 0.0;
      const auto res = std::from_chars(t.data(), t.data() + t.size(), x);
      if (res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(x))
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(lineno) + ", block " + current + ": bad number '" + t + "'");
      row.push_back(x);
    }
    auto& rows = blocks[current];
    if (!rows.empty() && rows.front().size() != row.size())
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ", block " + current +
                                             ": ragged row (" + std::to_string(row.size()) +
                                             " entries, expected " +
                                             std::to_string(rows.front().size()) + ")");
    rows.push_back(std::move(row));
  }
  ModelFile f;
  Matrix* targets[] = {&f.A, &f.B, &f.C, &f.D};
  const char* names[] = {"A", "B", "C", "D"};
  for (int k = 0; k < 4; ++k) {
    auto it = blocks.find(names[k]);
    if (it == blocks.end() || it->second.empty())
      throw Error(ErrorCode::ParseError, std::string("block ") + names[k] + ": missing or empty");
    const auto& rows = it->second;
    Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    *targets[k] = std::move(M);
  }
  return f;
}

inline std::string format_double(double x) {
  // "-0" would come back from the JSON reader as the integer 0.
  if (x == 0.0 && std::signbit(x)) return "-0.0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

/// Parses either format; JSON is detected by a leading '{'.
inline ModelFile parse_model(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return detail::parse_json_model(text);
  return detail::parse_text_model(text);
}

inline LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  ModelFile f = parse_model(ss.str());

  std::vector<std::string> warnings;
  if (f.A.rows() == f.A.cols() && f.A.rows() > 0) {
    const double mr = max_real_part(f.A);
    if (mr < 0.0 && mr > -1e-8 * std::max(1.0, f.A.norm()))
      warnings.push_back("A is barely stable (max Re(lambda) = " + detail::format_double(mr) + ")");
  }
  StateSpaceSystem sys(std::move(f.A), std::move(f.B), std::move(f.C), std::move(f.D));
  return {std::move(sys), std::move(f.name), std::move(f.metadata), std::move(warnings)};
}

/// JSON with 17 significant digits, so a reload reproduces every entry exactly.
inline std::string model_to_json(const StateSpaceSystem& sys,
                                 const std::optional<std::string>& name = std::nullopt,
                                 const std::map<std::string, std::string>& metadata = {}) {
  std::ostringstream out;
  auto array = [&](const Matrix& M) {
    out << '[';
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      for (Eigen::Index j = 0; j < M.cols(); ++j)
        out << (i || j ? ", " : "") << detail::format_double(M(i, j));
    out << ']';
  };
  out << "{\n";
  if (name) out << "  \"name\": " << nlohmann::json(*name).dump() << ",\n";
  if (!metadata.empty()) out << "  \"metadata\": " << nlohmann::json(metadata).dump() << ",\n";
  out << "  \"n\": " << sys.n() << ",\n  \"m\": " << sys.m() << ",\n";
  out << "  \"A\": ";
  array(sys.A());
  out << ",\n  \"B\": ";
  array(sys.B());
  out << ",\n  \"C\": ";
  array(sys.C());
  out << ",\n  \"D\": ";
  array(sys.D());
  out << "\n}\n";
  return out.str();
}

inline void write_model(const std::string& path, const StateSpaceSystem& sys,
                        const std::optional<std::string>& name = std::nullopt,
                        const std::map<std::string, std::string>& metadata = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  out << model_to_json(sys, name, metadata);
  if (!out) throw Error(ErrorCode::InvalidArgument, "write to '" + path + "' failed");
}

}  // namespace klap
