#pragma once

#include <string>
#include <vector>

#include "botledger/core.hpp"
#include "botledger/ingestion.hpp"

namespace botledger {

// Synthetic game economy. Bots farm at a steady rate and periodically mail
// their takings to a banker bot; humans play in diurnal bursts, buy items,
// bank and trade. None of the constants below describe a real game.

enum class Archetype { FarmingBot, BankerBot, CasualHuman, HardcoreHuman, MerchantHuman };
std::string_view archetype_name(Archetype a);

struct ArchetypeParams {
  double income_rate = 0;        // cash per active hour
  double income_cv = 0;          // relative spread of hourly income
  double duty_cycle = 0;         // mean probability of being active in an hour
  double diurnal_amplitude = 0;  // modulation of activity over the day
  double dump_interval = 24;     // hours between transfers to the banker
  double dump_fraction = 0;      // share of carried cash sent per transfer
  double item_rate = 0;          // items looted per active hour
  double item_value = 0;         // mean default price of a looted item
  double spend_propensity = 0;   // per active hour chance of a purchase
  double vendor_propensity = 0;  // per active hour chance of funding a vendor
  double bank_propensity = 0;    // per hour chance of a warehouse deposit
  double mail_rate = 0;          // per active hour chance of mailing a gift

  bool operator==(const ArchetypeParams&) const = default;
};

ArchetypeParams archetype_defaults(Archetype a);

struct GenConfig {
  std::size_t n_bots = 50;
  std::size_t n_normals = 200;
  std::size_t days = 28;
  std::int64_t snapshot_interval = 3600;  // seconds
  std::uint64_t seed = 1;
  double separability = 1.0;
  std::int64_t start_time = 1272672000;  // 2010-05-01T00:00:00Z

  void validate() const;
};

nlohmann::json to_json(const GenConfig& c);

enum class Role { Bot, Human };

// Everything drawn for one character before simulation starts. At
// separability 0 a bot's draw equals the human draw for the same seed.
struct CharacterDraw {
  Archetype archetype = Archetype::CasualHuman;
  Archetype human_basis = Archetype::CasualHuman;
  ArchetypeParams params;
  double initial_cash = 0, initial_bank_cash = 0, initial_account_bank = 0;
  double initial_items = 0, initial_item_value = 0;
  double peak_hour = 20;
  std::size_t dump_phase = 0;

  bool operator==(const CharacterDraw&) const = default;
};

CharacterDraw draw_character(Role role, Archetype bot_kind, std::uint64_t character_seed, double separability);

struct GenEvent {
  std::string kind;  // "dump" or "purchase"
  std::int64_t timestamp = 0;
  std::string character_id;
  std::string counterparty;  // banker for dumps, empty for purchases
  double cash = 0;
  double item_value = 0;
  double items = 0;
  double from_cash_before = 0, from_cash_after = 0;
  double to_cash_before = 0, to_cash_after = 0;
};

struct GeneratedCharacter {
  std::string character_id;
  std::string account_id;
  Label label = Label::Normal;
  CharacterDraw draw;
};

struct GeneratedData {
  std::vector<StatusRecord> records;  // grouped by character_id, then time
  LabelFile labels;
  std::vector<GenEvent> events;
  std::vector<GeneratedCharacter> characters;
};

GeneratedData generate(const GenConfig& cfg);

std::string write_event_log(const std::vector<GenEvent>& events);
std::vector<GenEvent> parse_event_log(std::string_view text);

// Force one feature column to a constant in every record (test fixtures for
// the elimination rules). Unknown feature names throw DataError.
std::vector<StatusRecord> inject_constant_feature(std::vector<StatusRecord> records, std::string_view feature,
                                                  double value);
std::vector<StatusRecord> inject_zero_feature(std::vector<StatusRecord> records, std::string_view feature);

}  // namespace botledger
