#include "k3gaps/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "k3gaps/errors.hpp"

namespace k3gaps::config {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Drops a trailing comment that is not inside a string.
std::string_view strip_comment(std::string_view s) {
  bool in_string = false;
  char quote = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\' && quote == '"') ++i;
      else if (c == quote) in_string = false;
    } else if (c == '"' || c == '\'') {
      in_string = true;
      quote = c;
    } else if (c == '#') {
      return s.substr(0, i);
    }
  }
  return s;
}

bool bare_key_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }

std::vector<std::string> split_key(std::string_view key, const std::string& where) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : key) {
    if (c == '.') {
      if (cur.empty()) throw ConfigError(where + ": empty key segment");
      parts.push_back(cur);
      cur.clear();
    } else if (bare_key_char(c)) {
      cur.push_back(c);
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      throw ConfigError(where + ": invalid character '" + std::string(1, c) + "' in key");
    }
  }
  if (cur.empty()) throw ConfigError(where + ": empty key");
  parts.push_back(cur);
  return parts;
}

class ValueParser {
 public:
  ValueParser(std::string_view s, std::string where) : s_(s), where_(std::move(where)) {}

  nlohmann::json parse_all() {
    nlohmann::json v = parse();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters after value");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(where_ + ": " + what); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  nlohmann::json parse() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return parse_basic_string();
    if (c == '\'') return parse_literal_string();
    if (c == '[') return parse_array();
    return parse_scalar();
  }

  nlohmann::json parse_basic_string() {
    std::string out;
    ++pos_;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '\\': c = '\\'; break;
          case '"': c = '"'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  nlohmann::json parse_literal_string() {
    const std::size_t end = s_.find('\'', pos_ + 1);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string out(s_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return out;
  }

  nlohmann::json parse_array() {
    nlohmann::json arr = nlohmann::json::array();
    ++pos_;
    for (;;) {
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(parse());
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      fail("expected ',' or ']' in array");
    }
  }

  nlohmann::json parse_scalar() {
    std::size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && !std::isspace(static_cast<unsigned char>(s_[end])))
      ++end;
    std::string tok(s_.substr(pos_, end - pos_));
    pos_ = end;
    if (tok == "true") return true;
    if (tok == "false") return false;
    if (tok == "inf" || tok == "+inf") return std::numeric_limits<double>::infinity();
    std::string digits;
    for (char c : tok)
      if (c != '_') digits.push_back(c);
    const bool floating = digits.find_first_of(".eE") != std::string::npos;
    if (!floating) {
      long long v = 0;
      const char* first = digits.data() + (digits.size() > 0 && digits[0] == '+' ? 1 : 0);
      auto [ptr, ec] = std::from_chars(first, digits.data() + digits.size(), v);
      if (ec == std::errc() && ptr == digits.data() + digits.size() && !digits.empty()) return v;
    } else {
      std::istringstream in(digits);
      in.imbue(std::locale::classic());
      double v = 0.0;
      in >> v;
      if (in && in.peek() == std::char_traits<char>::eof()) return v;
    }
    fail("cannot parse value '" + tok + "'");
  }

  std::string_view s_;
  std::string where_;
  std::size_t pos_ = 0;
};

nlohmann::json& descend(nlohmann::json& root, const std::vector<std::string>& path, std::size_t count,
                        const std::string& where) {
  nlohmann::json* node = &root;
  for (std::size_t i = 0; i < count; ++i) {
    nlohmann::json& child = (*node)[path[i]];
    if (child.is_null()) child = nlohmann::json::object();
    if (!child.is_object()) throw ConfigError(where + ": '" + path[i] + "' is not a table");
    node = &child;
  }
  return *node;
}

bool compatible(const nlohmann::json& base, const nlohmann::json& value) {
  if (base.is_number() && value.is_number()) {
    return !(base.is_number_integer() && value.is_number_float());
  }
  return base.type() == value.type();
}

std::string format_scalar(const nlohmann::json& v) {
  if (v.is_string()) return nlohmann::json(v.get<std::string>()).dump();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out << std::setprecision(17) << d;
    std::string s = out.str();
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
  }
  if (v.is_array()) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      s += format_scalar(v[i]);
    }
    return s + "]";
  }
  throw ConfigError("cannot write value of this type to TOML");
}

void emit(std::ostringstream& out, const nlohmann::json& node, const std::string& prefix) {
  for (const auto& [key, value] : node.items()) {
    if (!value.is_object()) out << key << " = " << format_scalar(value) << '\n';
  }
  for (const auto& [key, value] : node.items()) {
    if (value.is_object()) {
      const std::string name = prefix.empty() ? key : prefix + "." + key;
      out << "\n[" << name << "]\n";
      emit(out, value, name);
    }
  }
}

}  // namespace

nlohmann::json parse_toml(std::string_view text, const std::string& origin) {
  nlohmann::json root = nlohmann::json::object();
  std::vector<std::string> table;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    line = trim(strip_comment(line));
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.size() < 3 || line.back() != ']' || line[1] == '[') throw ConfigError(where + ": malformed table header");
      table = split_key(trim(line.substr(1, line.size() - 2)), where);
      descend(root, table, table.size(), where);
    } else {
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
      std::vector<std::string> key = split_key(trim(line.substr(0, eq)), where);
      std::vector<std::string> full = table;
      full.insert(full.end(), key.begin(), key.end());
      nlohmann::json& parent = descend(root, full, full.size() - 1, where);
      if (parent.contains(full.back())) throw ConfigError(where + ": duplicate key '" + full.back() + "'");
      parent[full.back()] = ValueParser(trim(line.substr(eq + 1)), where).parse_all();
    }
    if (end == text.size()) break;
  }
  return root;
}

nlohmann::json load_toml(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_toml(buf.str(), path.string());
}

nlohmann::json parse_value(std::string_view text) {
  try {
    return ValueParser(trim(text), "override").parse_all();
  } catch (const ConfigError&) {
    return std::string(trim(text));
  }
}

void apply_override(nlohmann::json& target, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::vector<std::string> key = split_key(trim(std::string_view(assignment).substr(0, eq)), "override");
  nlohmann::json* node = &target;
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (!node->is_object() || !node->contains(key[i])) {
      throw ConfigError("unknown config key '" + std::string(trim(std::string_view(assignment).substr(0, eq))) + "'");
    }
    node = &(*node)[key[i]];
  }
  nlohmann::json value = parse_value(std::string_view(assignment).substr(eq + 1));
  if (node->is_number_float() && value.is_number_integer()) value = value.get<double>();
  if (!compatible(*node, value)) {
    throw ConfigError("override '" + assignment + "' has the wrong type (expected " + std::string(node->type_name()) +
                      ")");
  }
  *node = std::move(value);
}

void merge(nlohmann::json& base, const nlohmann::json& layer, const std::string& origin) {
  for (const auto& [key, value] : layer.items()) {
    if (!base.contains(key)) throw ConfigError(origin + ": unknown config key '" + key + "'");
    nlohmann::json& slot = base[key];
    if (slot.is_object()) {
      if (!value.is_object()) throw ConfigError(origin + ": '" + key + "' must be a table");
      merge(slot, value, origin);
      continue;
    }
    nlohmann::json v = value;
    if (slot.is_number_float() && v.is_number_integer()) v = v.get<double>();
    if (!compatible(slot, v)) {
      throw ConfigError(origin + ": '" + key + "' has the wrong type (expected " + std::string(slot.type_name()) + ")");
    }
    slot = std::move(v);
  }
}

std::string to_toml(const nlohmann::json& tree) {
  std::ostringstream out;
  emit(out, tree, "");
  return out.str();
}

}  // namespace k3gaps::config
