#include "propfield/materials.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "propfield/error.hpp"
#include "propfield/prompt_assets.hpp"

namespace propfield {

using nlohmann::json;

namespace {

struct KindInfo {
  PropertyKind kind;
  std::string_view name;
  std::string_view short_name;
  std::string_view units;
  std::string_view asset;
  std::string_view item;  // format line item; {i} is the 1-based index
  std::size_t k;
  double temperature;
};

constexpr std::array kKinds{
    KindInfo{PropertyKind::MassDensity, "mass_density", "density", "kg/m^3", "mass_density",
             "(material {i}: low-high kg/m^3)", 5, 0.1},
    KindInfo{PropertyKind::Friction, "friction", "friction", "", "friction", "(material {i}: low-high)", 3, 0.01},
    KindInfo{PropertyKind::Hardness, "hardness", "hardness", "Shore (A: 0-100, D: 100-200)", "hardness",
             "(material {i}: low-high, <Shore A or Shore D>)", 3, 0.01},
    KindInfo{PropertyKind::YoungsModulus, "youngs_modulus", "youngs", "GPa", "youngs_modulus",
             "(material {i}: low-high GPa)", 5, 0.1},
    KindInfo{PropertyKind::ThermalConductivity, "thermal_conductivity", "thermal", "W/mK", "thermal_conductivity",
             "(material {i}: low-high W/mK)", 5, 0.1},
    KindInfo{PropertyKind::Custom, "custom", "custom", "", "custom", "(material {i}: low-high {units})", 5, 0.1},
};

const KindInfo& info(PropertyKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown property kind");
}

std::string asset(std::string_view name) {
  for (const auto& a : assets::kPromptAssets) {
    if (a.name == name) {
      std::string text(a.text);
      while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
      return text;
    }
  }
  throw Error(ErrorKind::InvalidArgument, "missing prompt asset " + std::string(name));
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string format_line(std::string_view item, std::size_t k, std::string_view units) {
  std::string line;
  for (std::size_t i = 1; i <= k; ++i) {
    std::string part(item);
    replace_all(part, "{i}", std::to_string(i));
    replace_all(part, "{units}", units);
    if (i > 1) line += ";";
    line += part;
  }
  return line;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ", ";
    out += names[i];
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// ---- response grammar ---------------------------------------------------

enum class UnitRule { Density, Unitless, Thickness, Gpa, ThermalConductivity, Any };

UnitRule unit_rule(PropertyKind kind) {
  switch (kind) {
    case PropertyKind::MassDensity: return UnitRule::Density;
    case PropertyKind::Friction:
    case PropertyKind::Hardness: return UnitRule::Unitless;
    case PropertyKind::YoungsModulus: return UnitRule::Gpa;
    case PropertyKind::ThermalConductivity: return UnitRule::ThermalConductivity;
    case PropertyKind::Custom: return UnitRule::Any;
  }
  return UnitRule::Any;
}

std::string canonical_unit(std::string_view unit) {
  std::string out;
  for (std::size_t i = 0; i < unit.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(unit[i]);
    // UTF-8 superscript three (U+00B3) and middle dot (U+00B7).
    if (c == 0xC2 && i + 1 < unit.size()) {
      const unsigned char n = static_cast<unsigned char>(unit[i + 1]);
      if (n == 0xB3) out += '3';
      ++i;
      continue;
    }
    if (std::isspace(c) || c == '$' || c == '^' || c == '{' || c == '}' || c == '(' || c == ')' || c == '*' ||
        c == '.' || c == '-' || c == '\\') {
      continue;
    }
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

bool unit_ok(std::string_view unit, UnitRule rule) {
  const std::string u = canonical_unit(unit);
  if (u.empty()) return true;
  switch (rule) {
    case UnitRule::Density: return u == "kg/m3" || u == "kgm3" || u == "kg/mtext3";
    case UnitRule::Unitless: return false;
    case UnitRule::Thickness: return u == "cm";
    case UnitRule::Gpa: return u == "gpa";
    case UnitRule::ThermalConductivity: return u == "w/mk" || u == "w/m/k" || u == "wm1k1" || u == "w/m·k";
    case UnitRule::Any: return true;
  }
  return false;
}

[[noreturn]] void fail(std::string_view fragment, const std::string& why, std::string_view raw) {
  throw ParseError(ErrorKind::Parse, "cannot parse \"" + std::string(fragment) + "\": " + why, std::string(raw));
}

// Parses a non-negative decimal at the start of s.
std::optional<double> take_number(std::string_view& s) {
  if (s.empty() || !(std::isdigit(static_cast<unsigned char>(s.front())) || s.front() == '.')) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{}) return std::nullopt;
  s.remove_prefix(static_cast<std::size_t>(ptr - s.data()));
  return v;
}

void skip_space(std::string_view& s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
}

bool take_range_separator(std::string_view& s) {
  static constexpr std::array<std::string_view, 4> seps{"-", "\xE2\x80\x93", "\xE2\x80\x94", "to "};
  for (auto sep : seps) {
    if (s.substr(0, sep.size()) == sep) {
      s.remove_prefix(sep.size());
      return true;
    }
  }
  return false;
}

std::optional<ShoreScale> parse_shore_tag(std::string_view tag) {
  std::string t = lower(trim(tag));
  if (!t.empty() && t.front() == '<' && t.back() == '>') t = trim(std::string_view(t).substr(1, t.size() - 2));
  if (t.rfind("shore", 0) == 0) t = trim(std::string_view(t).substr(5));
  if (t == "a") return ShoreScale::A;
  if (t == "d") return ShoreScale::D;
  return std::nullopt;
}

struct ParsedItem {
  std::string name;
  ValueRange value;
  std::optional<ShoreScale> shore;
};

ParsedItem parse_item(std::string_view item, UnitRule rule, std::string_view raw) {
  const std::string body = trim(item);
  if (body.size() < 2 || body.front() != '(' || body.back() != ')') fail(item, "expected a parenthesized tuple", raw);
  std::string_view inner(body);
  inner = inner.substr(1, inner.size() - 2);

  std::size_t sep = inner.find(':');
  if (sep == std::string_view::npos) sep = inner.find(',');
  if (sep == std::string_view::npos) fail(item, "missing ':' between name and value", raw);

  ParsedItem out;
  out.name = trim(inner.substr(0, sep));
  if (out.name.empty()) fail(item, "empty material name", raw);

  std::string_view rest = inner.substr(sep + 1);
  const std::size_t comma = rest.rfind(',');
  if (comma != std::string_view::npos) {
    const auto tag = parse_shore_tag(rest.substr(comma + 1));
    if (!tag) fail(item, "unrecognized suffix \"" + trim(rest.substr(comma + 1)) + "\"", raw);
    out.shore = tag;
    rest = rest.substr(0, comma);
  }

  skip_space(rest);
  const auto low = take_number(rest);
  if (!low) fail(item, "value is not a number", raw);
  double high = *low;
  skip_space(rest);
  if (take_range_separator(rest)) {
    skip_space(rest);
    const auto hi = take_number(rest);
    if (!hi) fail(item, "range upper bound is not a number", raw);
    high = *hi;
  }
  if (!std::isfinite(*low) || !std::isfinite(high)) fail(item, "value is not finite", raw);
  if (high < *low) fail(item, "inverted range", raw);
  if (!unit_ok(rest, out.shore ? UnitRule::Unitless : rule)) fail(item, "unexpected unit \"" + trim(rest) + "\"", raw);
  out.value = {*low, high};
  return out;
}

std::vector<std::string> split_items(std::string_view text) {
  // Top-level parenthesized groups separated by ';' (or ',' / '/' as in prose).
  std::vector<std::string> items;
  const std::string t = trim(text);
  std::size_t i = 0;
  while (i < t.size()) {
    const char c = t[i];
    if (std::isspace(static_cast<unsigned char>(c)) || c == ';' || c == ',' || c == '/') {
      ++i;
      continue;
    }
    if (c != '(') {
      const std::size_t end = t.find_first_of(";(", i);
      throw ParseError(ErrorKind::Parse,
                       "cannot parse \"" + t.substr(i, end == std::string::npos ? std::string::npos : end - i) +
                           "\": text outside a tuple",
                       std::string(text));
    }
    int depth = 0;
    std::size_t j = i;
    for (; j < t.size(); ++j) {
      if (t[j] == '(') ++depth;
      if (t[j] == ')' && --depth == 0) break;
    }
    if (j == t.size()) {
      throw ParseError(ErrorKind::Parse, "cannot parse \"" + t.substr(i) + "\": unbalanced parenthesis",
                       std::string(text));
    }
    items.push_back(t.substr(i, j - i + 1));
    i = j + 1;
  }
  return items;
}

std::vector<ParsedItem> parse_items(std::string_view text, std::size_t expected_k, UnitRule rule) {
  const auto items = split_items(text);
  if (items.size() != expected_k) {
    throw ParseError(ErrorKind::CountMismatch,
                     "expected " + std::to_string(expected_k) + " materials, got " + std::to_string(items.size()),
                     std::string(text));
  }
  std::vector<ParsedItem> out;
  for (const auto& item : items) out.push_back(parse_item(item, rule, text));
  return out;
}

template <typename ParseFn>
auto complete_with_retries(CompletionProvider& provider, const Prompt& prompt, std::size_t retries, ParseFn&& parse)
    -> decltype(parse(std::string{})) {
  std::string user = prompt.user;
  std::string last_raw;
  ErrorKind last_kind = ErrorKind::UnparseableResponse;
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= retries; ++attempt) {
    last_raw = provider.complete(prompt.system, user);
    try {
      return parse(last_raw);
    } catch (const ParseError& e) {
      last_kind = e.kind();
      last_error = e.what();
      user = prompt.user + "\n\nYour previous answer could not be parsed (" + last_error +
             "). Answer again and follow the format requirement exactly.";
    }
  }
  const ErrorKind kind = last_kind == ErrorKind::CountMismatch ? ErrorKind::CountMismatch
                                                              : ErrorKind::UnparseableResponse;
  throw ParseError(kind, "unparseable response after " + std::to_string(retries + 1) + " attempts: " + last_error,
                   last_raw);
}

std::string casefold(std::string_view s) { return lower(trim(s)); }

}  // namespace

std::string_view to_string(PropertyKind kind) { return info(kind).name; }

PropertyKind parse_property_kind(std::string_view name) {
  const std::string n = lower(name);
  for (const auto& k : kKinds) {
    if (n == k.name || n == k.short_name) return k.kind;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown property \"" + std::string(name) + "\"");
}

std::string_view default_units(PropertyKind kind) { return info(kind).units; }
std::size_t default_material_count(PropertyKind kind) { return info(kind).k; }
double default_temperature(PropertyKind kind) { return info(kind).temperature; }

bool MaterialDictionary::has_thickness() const {
  return !entries.empty() &&
         std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.thickness_cm.has_value(); });
}

void MaterialDictionary::validate() const {
  if (entries.empty() || entries.size() > 16) {
    throw Error(ErrorKind::InvalidArgument, "material dictionary must hold 1..16 entries");
  }
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (trim(e.name).empty()) throw Error(ErrorKind::InvalidArgument, "material with empty name");
    if (!seen.insert(casefold(e.name)).second) {
      throw Error(ErrorKind::InvalidArgument, "duplicate material \"" + e.name + "\"");
    }
    if (!(e.value.low <= e.value.high)) throw Error(ErrorKind::InvalidArgument, "inverted range for " + e.name);
    if (property_kind == PropertyKind::MassDensity && !(e.value.low > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "density of " + e.name + " must be positive");
    }
    if (e.thickness_cm && !(e.thickness_cm->low > 0.0 && e.thickness_cm->low <= e.thickness_cm->high)) {
      throw Error(ErrorKind::InvalidArgument, "thickness of " + e.name + " must be a positive range");
    }
  }
}

json to_json(const MaterialDictionary& dict) {
  json materials = json::array();
  for (const auto& e : dict.entries) {
    json m = {{"name", e.name}, {"low", e.value.low}, {"high", e.value.high}};
    m["thickness_low_cm"] = e.thickness_cm ? json(e.thickness_cm->low) : json(nullptr);
    m["thickness_high_cm"] = e.thickness_cm ? json(e.thickness_cm->high) : json(nullptr);
    m["shore"] = e.shore ? json(*e.shore == ShoreScale::A ? "A" : "D") : json(nullptr);
    materials.push_back(std::move(m));
  }
  return {{"property", std::string(to_string(dict.property_kind))},
          {"units", dict.units},
          {"caption", dict.caption},
          {"materials", materials}};
}

MaterialDictionary dictionary_from_json(const json& doc) {
  MaterialDictionary dict;
  try {
    dict.property_kind = parse_property_kind(doc.at("property").get<std::string>());
    dict.units = doc.at("units").get<std::string>();
    dict.caption = doc.at("caption").get<std::string>();
    for (const auto& m : doc.at("materials")) {
      MaterialEntry e;
      e.name = m.at("name").get<std::string>();
      e.value = {m.at("low").get<double>(), m.at("high").get<double>()};
      const auto& tl = m.at("thickness_low_cm");
      const auto& th = m.at("thickness_high_cm");
      if (!tl.is_null() && !th.is_null()) e.thickness_cm = ValueRange{tl.get<double>(), th.get<double>()};
      const auto& shore = m.at("shore");
      if (!shore.is_null()) {
        const auto tag = parse_shore_tag(shore.get<std::string>());
        if (!tag) throw Error(ErrorKind::InvalidArgument, "bad shore tag for " + e.name);
        e.shore = tag;
      }
      dict.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed dictionary: ") + e.what());
  }
  return dict;
}

void save_dictionary(const MaterialDictionary& dict, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  out << to_json(dict).dump(2) << "\n";
}

MaterialDictionary load_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingArtifact, "missing dictionary " + path.string());
  try {
    return dictionary_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::UnreadableFile, path.string() + ": " + e.what());
  }
}

std::size_t select_canonical_view(const SceneBundle& bundle, std::uint64_t seed) {
  const std::size_t n = bundle.frames.size();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "bundle has no frames");
  if (!bundle.has_masks()) {
    std::mt19937_64 rng(seed);
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  }
  std::vector<std::size_t> areas(n);
  for (std::size_t i = 0; i < n; ++i) areas[i] = bundle.frames[i].mask_area();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return areas[a] < areas[b]; });
  return order[(3 * (n - 1)) / 4];
}

std::string caption_prompt() { return asset("caption"); }

Prompt render_property_prompt(PropertyKind kind, std::string_view caption, std::size_t k,
                              const ProposalOptions& options) {
  const KindInfo& ki = info(kind);
  std::string system = asset(ki.asset);
  std::string units(ki.units);
  if (kind == PropertyKind::Custom) {
    if (options.custom_property.empty()) throw Error(ErrorKind::InvalidArgument, "custom property needs a name");
    units = options.custom_units;
    replace_all(system, "{property}", options.custom_property);
    replace_all(system, "{units}", units);
  }
  replace_all(system, "{format}", format_line(ki.item, k, units));
  replace_all(system, "{k}", std::to_string(k));

  std::string user = "Caption: \"" + std::string(caption) + "\"";
  if (kind == PropertyKind::YoungsModulus || kind == PropertyKind::ThermalConductivity) {
    if (options.material_names.size() != k) {
      throw Error(ErrorKind::InvalidArgument,
                  std::string(ki.name) + " prompts need the " + std::to_string(k) + " candidate material names");
    }
    user += " Materials: \"" + join_names(options.material_names) + "\"";
  }
  return {system, user};
}

Prompt render_thickness_prompt(std::string_view caption, const std::vector<std::string>& material_names) {
  std::string system = asset("thickness");
  replace_all(system, "{format}", format_line("(material {i}: low-high cm)", material_names.size(), ""));
  replace_all(system, "{k}", std::to_string(material_names.size()));
  return {system, "Caption: \"" + std::string(caption) + "\" Materials: \"" + join_names(material_names) + "\""};
}

std::vector<MaterialEntry> parse_material_response(std::string_view text, std::size_t expected_k,
                                                   PropertyKind kind) {
  std::vector<MaterialEntry> out;
  for (auto& item : parse_items(text, expected_k, unit_rule(kind))) {
    out.push_back(MaterialEntry{std::move(item.name), item.value, std::nullopt, item.shore});
  }
  return out;
}

std::vector<ValueRange> parse_thickness_response(std::string_view text, std::size_t expected_k) {
  std::vector<ValueRange> out;
  for (const auto& item : parse_items(text, expected_k, UnitRule::Thickness)) {
    if (item.shore) throw ParseError(ErrorKind::Parse, "thickness item " + item.name + " carries a Shore tag",
                                     std::string(text));
    out.push_back(item.value);
  }
  return out;
}

namespace {

std::string render_value(const ValueRange& v) {
  return v.low == v.high ? format_number(v.low) : format_number(v.low) + "-" + format_number(v.high);
}

}  // namespace

std::string render_material_response(const std::vector<MaterialEntry>& entries, PropertyKind kind) {
  std::string out;
  const std::string units(kind == PropertyKind::Custom ? std::string_view{} : info(kind).units);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (i) out += ";";
    out += "(" + e.name + ": " + render_value(e.value);
    if (e.shore) {
      out += *e.shore == ShoreScale::A ? ", Shore A" : ", Shore D";
    } else if (kind != PropertyKind::Hardness && !units.empty()) {
      out += " " + units;
    }
    out += ")";
  }
  return out;
}

std::string render_thickness_response(const std::vector<MaterialEntry>& entries) {
  std::string out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].thickness_cm) throw Error(ErrorKind::MissingThickness, "no thickness for " + entries[i].name);
    if (i) out += ";";
    out += "(" + entries[i].name + ": " + render_value(*entries[i].thickness_cm) + " cm)";
  }
  return out;
}

MaterialDictionary propose_materials(std::string_view caption, PropertyKind kind, std::size_t k,
                                     CompletionProvider& provider, const ProposalOptions& options) {
  if (trim(caption).empty()) throw Error(ErrorKind::InvalidArgument, "caption is empty");
  if (k < 1 || k > 16) throw Error(ErrorKind::InvalidArgument, "material count must be in 1..16");
  const Prompt prompt = render_property_prompt(kind, caption, k, options);
  MaterialDictionary dict;
  dict.property_kind = kind;
  dict.units = kind == PropertyKind::Custom ? options.custom_units : std::string(default_units(kind));
  dict.caption = std::string(caption);
  dict.entries = complete_with_retries(provider, prompt, options.retries, [&](const std::string& raw) {
    auto entries = parse_material_response(raw, k, kind);
    MaterialDictionary probe{kind, dict.units, dict.caption, entries};
    try {
      probe.validate();
    } catch (const Error& e) {
      throw ParseError(ErrorKind::Parse, e.what(), raw);
    }
    return entries;
  });
  return dict;
}

MaterialDictionary estimate_thickness(std::string_view caption, const MaterialDictionary& dict,
                                      CompletionProvider& provider, std::size_t retries) {
  for (const auto& e : dict.entries) {
    if (e.thickness_cm) throw Error(ErrorKind::InvalidArgument, "dictionary already carries thickness");
  }
  std::vector<std::string> names;
  for (const auto& e : dict.entries) names.push_back(e.name);
  const Prompt prompt = render_thickness_prompt(caption, names);
  const auto ranges = complete_with_retries(provider, prompt, retries, [&](const std::string& raw) {
    auto r = parse_thickness_response(raw, names.size());
    for (const auto& t : r) {
      if (!(t.low > 0.0)) throw ParseError(ErrorKind::Parse, "thickness must be positive", raw);
    }
    return r;
  });
  MaterialDictionary out = dict;
  for (std::size_t i = 0; i < out.entries.size(); ++i) out.entries[i].thickness_cm = ranges[i];
  return out;
}

std::vector<MaterialEntry> combine_shore_scales(const std::vector<MaterialEntry>& entries) {
  std::vector<MaterialEntry> out = entries;
  for (auto& e : out) {
    if (!e.shore) throw Error(ErrorKind::InvalidArgument, "material \"" + e.name + "\" has no Shore A/D tag");
    if (*e.shore == ShoreScale::D) {
      e.value.low += 100.0;
      e.value.high += 100.0;
    }
  }
  return out;
}

}  // namespace propfield
