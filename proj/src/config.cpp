// SPDX-License-Identifier: Apache-2.0
#include "stst/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "stst/error.hpp"
#include "stst/io.hpp"

namespace stst {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* first = value.data();
  const auto* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorKind::Config, "key '" + key + "': cannot parse '" + value + "' as a number");
  }
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!cfg.entries_.emplace(key, std::move(value)).second) {
      throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const Error& e) {
    throw Error(e.kind(), "'" + path.string() + "': " + e.what());
  }
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void KeyValueConfig::set(const std::string& key, std::string value) { entries_[key] = std::move(value); }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const double d = parse_number<double>(key, *v);
  if (!std::isfinite(d)) throw Error(ErrorKind::Config, "key '" + key + "' must be finite");
  return d;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  const auto v = get(key);
  return v ? parse_number<std::int64_t>(key, *v) : fallback;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
  const auto v = get(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw Error(ErrorKind::Config, "key '" + key + "': '" + *v + "' is not a boolean");
}

void KeyValueConfig::require_known(const std::set<std::string>& known) const {
  for (const auto& [key, value] : entries_) {
    bool ok = known.contains(key);
    for (const auto& k : known) {
      if (!ok && !k.empty() && k.back() == '.' && key.starts_with(k)) ok = true;
    }
    if (!ok) throw Error(ErrorKind::Config, "unknown configuration key '" + key + "'");
  }
}

std::string KeyValueConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

StainMatrix stain_matrix_from_config(const KeyValueConfig& cfg, const std::string& prefix) {
  std::vector<StainVector> cols;
  std::vector<StainLabel> labels;
  for (auto label : {StainLabel::Hematoxylin, StainLabel::Eosin, StainLabel::Background}) {
    const auto key = prefix + std::string(to_string(label));
    const auto v = cfg.get(key);
    if (!v) continue;
    std::istringstream in(*v);
    StainVector col{};
    for (double& c : col) {
      if (!(in >> c)) throw Error(ErrorKind::Config, "key '" + key + "' needs three numbers");
    }
    std::string rest;
    if (in >> rest) throw Error(ErrorKind::Config, "key '" + key + "' has more than three numbers");
    cols.push_back(col);
    labels.push_back(label);
  }
  if (cols.empty()) throw Error(ErrorKind::Config, "no stain columns under '" + prefix + "'");
  return StainMatrix::from_unnormalized(std::move(cols), std::move(labels));
}

void stain_matrix_to_config(const StainMatrix& m, KeyValueConfig& cfg, const std::string& prefix) {
  for (std::size_t k = 0; k < m.stains(); ++k) {
    std::ostringstream s;
    s.precision(17);
    s << m.column(k)[0] << ' ' << m.column(k)[1] << ' ' << m.column(k)[2];
    cfg.set(prefix + std::string(to_string(m.label(k))), s.str());
  }
}

}  // namespace stst
