#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "propfield/providers.hpp"
#include "propfield/scene_io.hpp"

namespace propfield {

enum class PropertyKind { MassDensity, Friction, Hardness, YoungsModulus, ThermalConductivity, Custom };

std::string_view to_string(PropertyKind kind);
/// Accepts canonical names ("mass_density") and CLI short names ("density").
PropertyKind parse_property_kind(std::string_view name);

/// Units the prompts ask for, e.g. "kg/m^3".
std::string_view default_units(PropertyKind kind);
std::size_t default_material_count(PropertyKind kind);
double default_temperature(PropertyKind kind);

enum class ShoreScale { A, D };

struct ValueRange {
  double low = 0.0;
  double high = 0.0;

  double midpoint() const { return 0.5 * (low + high); }
  bool operator==(const ValueRange&) const = default;
};

struct MaterialEntry {
  std::string name;
  ValueRange value;
  std::optional<ValueRange> thickness_cm;
  std::optional<ShoreScale> shore;

  bool operator==(const MaterialEntry&) const = default;
};

struct MaterialDictionary {
  PropertyKind property_kind = PropertyKind::MassDensity;
  std::string units;
  std::string caption;
  std::vector<MaterialEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool has_thickness() const;
  void validate() const;
};

nlohmann::json to_json(const MaterialDictionary& dict);
MaterialDictionary dictionary_from_json(const nlohmann::json& doc);
void save_dictionary(const MaterialDictionary& dict, const std::filesystem::path& path);
MaterialDictionary load_dictionary(const std::filesystem::path& path);

/// With masks: frames sorted by mask area (ascending, stable), index
/// floor(0.75 * (n - 1)). Without masks: seeded uniform choice.
std::size_t select_canonical_view(const SceneBundle& bundle, std::uint64_t seed);

struct Prompt {
  std::string system;
  std::string user;
};

/// Prompt sent to the captioner.
std::string caption_prompt();

struct ProposalOptions {
  std::size_t retries = 3;
  /// Required by kinds whose prompt estimates values for known materials
  /// (Young's modulus, thermal conductivity).
  std::vector<std::string> material_names;
  std::string custom_property;
  std::string custom_units;
};

Prompt render_property_prompt(PropertyKind kind, std::string_view caption, std::size_t k,
                              const ProposalOptions& options = {});
Prompt render_thickness_prompt(std::string_view caption, const std::vector<std::string>& material_names);

/// Parses "(name: low[-high] unit[, Shore A|D]);..." with exactly expected_k
/// items. Throws ParseError (kind Parse, or CountMismatch for a wrong item count).
std::vector<MaterialEntry> parse_material_response(std::string_view text, std::size_t expected_k,
                                                   PropertyKind kind);

/// Thickness replies use the same grammar with centimeter units.
std::vector<ValueRange> parse_thickness_response(std::string_view text, std::size_t expected_k);

/// Canonical grammar, accepted by parse_material_response.
std::string render_material_response(const std::vector<MaterialEntry>& entries, PropertyKind kind);
std::string render_thickness_response(const std::vector<MaterialEntry>& entries);

MaterialDictionary propose_materials(std::string_view caption, PropertyKind kind, std::size_t k,
                                     CompletionProvider& provider, const ProposalOptions& options = {});

MaterialDictionary estimate_thickness(std::string_view caption, const MaterialDictionary& dict,
                                      CompletionProvider& provider, std::size_t retries = 3);

/// Shore A stays in [0,100]; Shore D shifts by +100 into [100,200].
std::vector<MaterialEntry> combine_shore_scales(const std::vector<MaterialEntry>& entries);

}  // namespace propfield
