#include <cmath>
#include <fstream>
#include <sstream>

#include "gece/providers.hpp"

namespace gece {

namespace {

std::string at_line(const std::string& source, std::size_t line_no) {
  return source + ":" + std::to_string(line_no) + ": ";
}

}  // namespace

WordFrequencyTable parse_word_frequency_table(std::istream& in, const std::string& corpus_name,
                                              double floor_frequency) {
  std::unordered_map<std::string, double> freqs;
  std::string line;
  std::size_t line_no = 0;
  double total = 0.0;
  double min_freq = 1.0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || line.find('\t', tab + 1) != std::string::npos) {
      throw LoadError(at_line(corpus_name, line_no) + "expected 'token<TAB>frequency'");
    }
    std::string token = line.substr(0, tab);
    const std::string number = line.substr(tab + 1);
    double f = 0.0;
    std::size_t consumed = 0;
    try {
      f = std::stod(number, &consumed);
    } catch (const std::exception&) {
      throw LoadError(at_line(corpus_name, line_no) + "malformed frequency '" + number + "'");
    }
    if (consumed != number.size() || !std::isfinite(f)) {
      throw LoadError(at_line(corpus_name, line_no) + "malformed frequency '" + number + "'");
    }
    if (!(f > 0.0)) {
      throw LoadError(at_line(corpus_name, line_no) + "non-positive frequency for '" + token + "'");
    }
    if (!freqs.emplace(token, f).second) {
      throw LoadError(at_line(corpus_name, line_no) + "duplicate token '" + token + "'");
    }
    total += f;
    min_freq = std::min(min_freq, f);
  }
  if (freqs.empty()) throw LoadError(corpus_name + ": empty table");
  if (total > 1.0 + 1e-6) {
    throw LoadError(corpus_name + ": frequencies sum to " + std::to_string(total) + " > 1");
  }
  return WordFrequencyTable(std::move(freqs), std::min(floor_frequency, min_freq), corpus_name);
}

WordFrequencyTable load_word_frequency_table(const std::string& path, double floor_frequency) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open frequency table " + path);
  return parse_word_frequency_table(in, path, floor_frequency);
}

GradientFile parse_gradients(std::istream& in) {
  GradientFile out;
  std::string line;
  std::size_t line_no = 0;
  bool have_mean = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw LoadError("gradient file line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_mean) {
      if (!j.is_object() || !j.contains("mean")) {
        throw LoadError("gradient file: missing mean line");
      }
      out.mean = GradientVector{"mean", j.at("mean").get<std::vector<double>>()};
      if (out.mean.values.empty()) throw LoadError("gradient file: empty mean vector");
      have_mean = true;
      continue;
    }
    if (!j.is_object() || !j.contains("instance_id") || !j.contains("grad")) {
      throw LoadError("gradient file line " + std::to_string(line_no) +
                      ": expected {instance_id, grad}");
    }
    const json& id = j.at("instance_id");
    GradientVector g{id.is_string() ? id.get<std::string>() : id.dump(),
                     j.at("grad").get<std::vector<double>>()};
    if (g.dimension() != out.mean.dimension()) {
      throw LoadError("gradient dimension mismatch for instance '" + g.instance_id + "' (line " +
                      std::to_string(line_no) + "): expected " +
                      std::to_string(out.mean.dimension()) + ", got " +
                      std::to_string(g.dimension()));
    }
    for (double v : g.values) {
      if (!std::isfinite(v)) {
        throw LoadError("non-finite gradient value for instance '" + g.instance_id + "'");
      }
    }
    if (!out.per_instance.emplace(g.instance_id, g).second) {
      throw LoadError("duplicate gradient for instance '" + g.instance_id + "'");
    }
  }
  if (!have_mean) throw LoadError("gradient file: missing mean line");
  return out;
}

GradientFile load_gradients(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open gradient file " + path);
  return parse_gradients(in);
}

}  // namespace gece
