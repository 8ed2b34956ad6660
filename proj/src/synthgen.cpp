#include "botledger/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "botledger/random.hpp"

namespace botledger {

std::string_view archetype_name(Archetype a) {
  switch (a) {
    case Archetype::FarmingBot: return "farming_bot";
    case Archetype::BankerBot: return "banker_bot";
    case Archetype::CasualHuman: return "casual_human";
    case Archetype::HardcoreHuman: return "hardcore_human";
    case Archetype::MerchantHuman: return "merchant_human";
  }
  return "?";
}

ArchetypeParams archetype_defaults(Archetype a) {
  // income, cv, duty, diurnal, dump interval, dump fraction, item rate, item value,
  // spend, vendor, bank, mail
  switch (a) {
    case Archetype::FarmingBot: return {800, 0.08, 0.96, 0.0, 24, 0.9, 2.5, 30, 0.005, 0.0, 0.0, 0.0};
    case Archetype::BankerBot: return {20, 0.5, 0.10, 0.0, 24, 0.0, 0.05, 30, 0.01, 0.0, 0.25, 0.0};
    case Archetype::CasualHuman: return {120, 0.9, 0.20, 0.9, 24, 0.0, 0.4, 60, 0.12, 0.01, 0.03, 0.01};
    case Archetype::HardcoreHuman: return {260, 0.7, 0.45, 0.7, 24, 0.0, 1.0, 60, 0.10, 0.02, 0.04, 0.015};
    case Archetype::MerchantHuman: return {150, 0.8, 0.35, 0.6, 24, 0.0, 0.3, 80, 0.15, 0.25, 0.05, 0.02};
  }
  return {};
}

void GenConfig::validate() const {
  if (days < 1) throw UsageError("days must be at least 1");
  if (snapshot_interval <= 0) throw UsageError("snapshot interval must be positive");
  if (!(separability >= 0.0 && separability <= 1.0)) throw UsageError("separability must lie in [0, 1]");
}

nlohmann::json to_json(const GenConfig& c) {
  return {{"n_bots", c.n_bots},     {"n_normals", c.n_normals},       {"days", c.days},
          {"snapshot_interval", c.snapshot_interval}, {"seed", c.seed}, {"separability", c.separability},
          {"start_time", c.start_time}};
}

namespace {

ArchetypeParams lerp(const ArchetypeParams& a, const ArchetypeParams& b, double s) {
  auto l = [s](double x, double y) { return x + s * (y - x); };
  return {l(a.income_rate, b.income_rate),
          l(a.income_cv, b.income_cv),
          l(a.duty_cycle, b.duty_cycle),
          l(a.diurnal_amplitude, b.diurnal_amplitude),
          l(a.dump_interval, b.dump_interval),
          l(a.dump_fraction, b.dump_fraction),
          l(a.item_rate, b.item_rate),
          l(a.item_value, b.item_value),
          l(a.spend_propensity, b.spend_propensity),
          l(a.vendor_propensity, b.vendor_propensity),
          l(a.bank_propensity, b.bank_propensity),
          l(a.mail_rate, b.mail_rate)};
}

struct Wallet {
  double inv_cash = 0, bank_cash = 0, vendor_cash = 0;
  double inv_items = 0, inv_item_value = 0;
  double bank_items = 0, bank_item_value = 0;
  double account_bank = 0;
  double mail_value = 0;  // mailed this step

  FeatureVector snapshot() const {
    const double total_cash = inv_cash + bank_cash + vendor_cash;
    return {inv_items + bank_items,
            total_cash,
            inv_cash,
            bank_cash,
            vendor_cash,
            total_cash + inv_item_value + bank_item_value,
            mail_value,
            bank_cash + bank_item_value,
            account_bank};
  }
};

// Shares of a stock are always whole currency units.
double part(double amount, double fraction) { return std::floor(amount * fraction); }

struct StepContext {
  std::int64_t timestamp;
  double hour_of_day;
  double hours;  // hours covered by one snapshot
};

double per_step(double p_per_hour, double hours) { return std::clamp(p_per_hour * hours, 0.0, 1.0); }

void simulate_activity(Wallet& w, const CharacterDraw& d, const StepContext& ctx, Rng& rng,
                       const std::string& id, std::vector<GenEvent>& events) {
  const auto& p = d.params;
  w.mail_value = 0;
  const double phase = 2.0 * std::numbers::pi * (ctx.hour_of_day - d.peak_hour) / 24.0;
  const double p_active = std::clamp(p.duty_cycle * (1.0 + p.diurnal_amplitude * std::cos(phase)), 0.0, 1.0);
  const bool active = rng.uniform() < p_active;

  if (active) {
    const double income = p.income_rate * ctx.hours * std::max(0.0, 1.0 + p.income_cv * rng.normal());
    w.inv_cash += std::round(income);

    const double expected_items = p.item_rate * ctx.hours;
    double looted = std::floor(expected_items);
    if (rng.uniform() < expected_items - looted) looted += 1;
    for (int i = 0; i < static_cast<int>(looted); ++i) w.inv_item_value += std::round(p.item_value * rng.uniform(0.5, 1.5));
    w.inv_items += looted;

    if (rng.uniform() < per_step(p.spend_propensity, ctx.hours) && w.inv_cash > 0) {
      const double before = w.inv_cash;
      const double spent = part(w.inv_cash, rng.uniform(0.2, 0.6));
      const double bought = 1.0 + static_cast<double>(rng.below(3));
      w.inv_cash -= spent;
      w.inv_items += bought;
      w.inv_item_value += std::round(spent * 0.8);
      events.push_back({"purchase", ctx.timestamp, id, "", spent, std::round(spent * 0.8), bought, before, w.inv_cash, 0, 0});
    }

    if (rng.uniform() < per_step(p.vendor_propensity, ctx.hours)) {
      const double listed = part(w.inv_cash, rng.uniform(0.2, 0.5));
      w.inv_cash -= listed;
      w.vendor_cash += listed;
    }
    if (w.vendor_cash > 0 && rng.uniform() < 0.25) {
      w.inv_cash += std::round(w.vendor_cash * rng.uniform(1.0, 1.15));
      w.vendor_cash = 0;
    }

    if (rng.uniform() < per_step(p.mail_rate, ctx.hours)) {
      const double gift = part(w.inv_cash, rng.uniform(0.05, 0.2));
      w.inv_cash -= gift;
      w.mail_value += gift;
    }
  }

  const double bank_p = per_step(p.bank_propensity, ctx.hours);
  if (rng.uniform() < bank_p) {
    const double cash = part(w.inv_cash, rng.uniform(0.3, 0.7));
    w.inv_cash -= cash;
    w.bank_cash += cash;
    const double items = std::floor(w.inv_items / 2.0);
    if (items > 0) {
      const double value = part(w.inv_item_value, items / w.inv_items);
      w.inv_items -= items;
      w.inv_item_value -= value;
      w.bank_items += items;
      w.bank_item_value += value;
    }
  }
  if (rng.uniform() < bank_p * 0.5) {
    const double cash = part(w.bank_cash, 0.5);
    w.bank_cash -= cash;
    w.inv_cash += cash;
  }
  if (rng.uniform() < bank_p * 0.3) {
    const double cash = part(w.inv_cash, 0.25);
    w.inv_cash -= cash;
    w.account_bank += cash;
  }
}

Wallet initial_wallet(const CharacterDraw& d) {
  Wallet w;
  w.inv_cash = d.initial_cash;
  w.bank_cash = d.initial_bank_cash;
  w.account_bank = d.initial_account_bank;
  w.inv_items = d.initial_items;
  w.inv_item_value = d.initial_item_value;
  return w;
}

struct Transfer {
  std::size_t step;
  std::size_t farmer;  // index into characters
  double cash, items, item_value;
  double from_before, from_after;
};

}  // namespace

CharacterDraw draw_character(Role role, Archetype bot_kind, std::uint64_t character_seed, double separability) {
  Rng rng(character_seed);
  CharacterDraw d;
  const double u = rng.uniform();
  d.human_basis = u < 0.5 ? Archetype::CasualHuman : u < 0.8 ? Archetype::HardcoreHuman : Archetype::MerchantHuman;
  const double income_mult = std::exp(0.25 * rng.normal());
  const double item_mult = std::exp(0.25 * rng.normal());
  d.initial_cash = std::round(std::exp(7.5 + 0.8 * rng.normal()));
  d.initial_bank_cash = std::round(std::exp(7.0 + 1.0 * rng.normal()));
  d.initial_account_bank = std::round(std::exp(6.5 + 1.0 * rng.normal()));
  d.initial_items = 5.0 + static_cast<double>(rng.below(40));
  d.initial_item_value = d.initial_items * std::round(rng.uniform(20.0, 80.0));
  d.peak_hour = rng.uniform(17.0, 23.0);
  d.dump_phase = static_cast<std::size_t>(rng.below(24));

  const ArchetypeParams human = archetype_defaults(d.human_basis);
  if (role == Role::Human) {
    d.archetype = d.human_basis;
    d.params = human;
  } else {
    d.archetype = bot_kind;
    d.params = lerp(human, archetype_defaults(bot_kind), separability);
  }
  d.params.income_rate *= income_mult;
  d.params.item_rate *= item_mult;
  return d;
}

GeneratedData generate(const GenConfig& cfg) {
  cfg.validate();
  GeneratedData out;
  const std::size_t n = cfg.n_bots + cfg.n_normals;
  const double hours = static_cast<double>(cfg.snapshot_interval) / 3600.0;
  const auto steps = static_cast<std::size_t>(static_cast<std::int64_t>(cfg.days) * 86400 /
                                              cfg.snapshot_interval);

  // roles are shuffled over ids so the id order carries no label information
  std::vector<Role> roles(n, Role::Human);
  std::fill(roles.begin(), roles.begin() + static_cast<std::ptrdiff_t>(cfg.n_bots), Role::Bot);
  Rng layout(derive_seed(cfg.seed, 0x1a));
  layout.shuffle(roles);

  const std::size_t n_bankers = cfg.n_bots >= 2 ? std::max<std::size_t>(1, cfg.n_bots / 6) : 0;
  std::vector<std::size_t> bankers;
  std::size_t bots_seen = 0;
  for (std::size_t i = 0; i < n; ++i) {
    GeneratedCharacter ch;
    ch.character_id = fmt::format("c{:05d}", i + 1);
    ch.account_id = fmt::format("a{:05d}", i + 1);
    Archetype kind = Archetype::FarmingBot;
    if (roles[i] == Role::Bot) {
      ch.label = Label::Bot;
      if (bots_seen++ < n_bankers) {
        kind = Archetype::BankerBot;
        bankers.push_back(i);
      }
    }
    ch.draw = draw_character(roles[i], kind, derive_seed(cfg.seed, 1000 + i), cfg.separability);
    out.characters.push_back(std::move(ch));
    out.labels.entries[out.characters.back().character_id] = out.characters.back().label;
  }
  out.labels.as_of = format_timestamp(cfg.start_time + static_cast<std::int64_t>(steps) * cfg.snapshot_interval).substr(0, 10);

  std::vector<std::vector<StatusRecord>> records(n);
  std::vector<std::vector<GenEvent>> own_events(n);
  std::vector<std::vector<Transfer>> inbound(n);  // per banker
  std::size_t farmer_no = 0;

  auto run = [&](std::size_t i, const std::vector<Transfer>* incoming) {
    const auto& ch = out.characters[i];
    Rng rng(derive_seed(derive_seed(cfg.seed, 1000 + i), 0x5e));
    Wallet w = initial_wallet(ch.draw);
    const auto& p = ch.draw.params;
    const auto dump_steps = static_cast<std::size_t>(std::max(1.0, std::round(p.dump_interval / hours)));
    const bool dumps = ch.label == Label::Bot && ch.draw.archetype == Archetype::FarmingBot && p.dump_fraction > 0 &&
                       !bankers.empty();
    const std::size_t banker = dumps ? bankers[farmer_no++ % bankers.size()] : 0;
    std::size_t next_in = 0;
    records[i].reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
      const std::int64_t ts = cfg.start_time + static_cast<std::int64_t>(s) * cfg.snapshot_interval;
      const StepContext ctx{ts, static_cast<double>(ts % 86400) / 3600.0, hours};
      simulate_activity(w, ch.draw, ctx, rng, ch.character_id, own_events[i]);

      if (dumps && (s + ch.draw.dump_phase) % dump_steps == dump_steps - 1) {
        Transfer t{s, i, part(w.inv_cash, p.dump_fraction), w.inv_items, w.inv_item_value, w.inv_cash, 0};
        w.inv_cash -= t.cash;
        w.inv_items = 0;
        w.inv_item_value = 0;
        t.from_after = w.inv_cash;
        w.mail_value += t.cash + t.item_value;
        if (t.cash > 0 || t.items > 0) inbound[banker].push_back(t);
      }
      if (incoming) {
        for (; next_in < incoming->size() && (*incoming)[next_in].step == s; ++next_in) {
          const auto& t = (*incoming)[next_in];
          const double before = w.inv_cash;
          w.inv_cash += t.cash;
          w.inv_items += t.items;
          w.inv_item_value += t.item_value;
          w.mail_value += t.cash + t.item_value;
          own_events[i].push_back({"dump", ts, out.characters[t.farmer].character_id, ch.character_id, t.cash,
                                   t.item_value, t.items, t.from_before, t.from_after, before, w.inv_cash});
        }
      }
      records[i].push_back({ch.character_id, ch.account_id, ts, w.snapshot()});
    }
  };

  // farmers first so that each banker sees the transfers addressed to it
  for (std::size_t i = 0; i < n; ++i)
    if (std::find(bankers.begin(), bankers.end(), i) == bankers.end()) run(i, nullptr);
  for (std::size_t b : bankers) {
    auto& in = inbound[b];
    std::stable_sort(in.begin(), in.end(), [](const Transfer& x, const Transfer& y) { return x.step < y.step; });
    run(b, &in);
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (auto& r : records[i]) out.records.push_back(std::move(r));
    for (auto& e : own_events[i]) out.events.push_back(std::move(e));
  }
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const GenEvent& a, const GenEvent& b) { return a.timestamp < b.timestamp; });
  return out;
}

std::string write_event_log(const std::vector<GenEvent>& events) {
  fmt::memory_buffer buf;
  auto out = std::back_inserter(buf);
  fmt::format_to(out,
                 "# botledger synthetic event log v1; auxiliary, never used as model input\n"
                 "kind,timestamp,character_id,counterparty,cash,item_value,items,from_cash_before,from_cash_after,"
                 "to_cash_before,to_cash_after\n");
  for (const auto& e : events)
    fmt::format_to(out, "{},{},{},{},{},{},{},{},{},{},{}\n", e.kind, e.timestamp, e.character_id, e.counterparty,
                   e.cash, e.item_value, e.items, e.from_cash_before, e.from_cash_after, e.to_cash_before,
                   e.to_cash_after);
  return fmt::to_string(buf);
}

std::vector<GenEvent> parse_event_log(std::string_view text) {
  std::vector<GenEvent> out;
  bool header = false;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::size_t p = 0;
    while (true) {
      auto q = line.find(',', p);
      f.emplace_back(line.substr(p, q == std::string_view::npos ? std::string_view::npos : q - p));
      if (q == std::string_view::npos) break;
      p = q + 1;
    }
    if (f.size() != 11) throw FormatError("event log: expected 11 fields");
    try {
      out.push_back({f[0], std::stoll(f[1]), f[2], f[3], std::stod(f[4]), std::stod(f[5]), std::stod(f[6]),
                     std::stod(f[7]), std::stod(f[8]), std::stod(f[9]), std::stod(f[10])});
    } catch (const std::logic_error&) {
      throw FormatError("event log: bad number");
    }
  }
  return out;
}

std::vector<StatusRecord> inject_constant_feature(std::vector<StatusRecord> records, std::string_view feature,
                                                  double value) {
  const auto schema = canonical_schema();
  const auto idx = schema.find_column(feature);
  if (!idx) throw DataError(fmt::format("unknown feature '{}'", feature));
  for (auto& r : records) r.values[*idx] = value;
  return records;
}

std::vector<StatusRecord> inject_zero_feature(std::vector<StatusRecord> records, std::string_view feature) {
  return inject_constant_feature(std::move(records), feature, 0.0);
}

}  // namespace botledger
