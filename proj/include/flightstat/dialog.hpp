#pragma once

// Slot-filling conversation engine: a four-option menu, one question per
// system turn, and deterministic keyword rules instead of a language model.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "flightstat/calendar.hpp"
#include "flightstat/errors.hpp"
#include "flightstat/numerics.hpp"
#include "flightstat/store.hpp"

namespace flightstat {

enum class Intent { list_flights, add_flight, remove_flight, check_flight, get_delay };
enum class CheckVariant { next, by_origin, by_datetime };
enum class Slot { origin, destination, airline, date, time };
enum class DialogState { greeting, menu, choosing, collecting, confirming, closed };

inline const char* intent_name(Intent i) {
    switch (i) {
        case Intent::list_flights: return "list_flights";
        case Intent::add_flight: return "add_flight";
        case Intent::remove_flight: return "remove_flight";
        case Intent::check_flight: return "check_flight";
        case Intent::get_delay: return "get_delay";
    }
    return "?";
}

inline const char* variant_name(CheckVariant v) {
    switch (v) {
        case CheckVariant::next: return "next";
        case CheckVariant::by_origin: return "by_origin";
        case CheckVariant::by_datetime: return "by_datetime";
    }
    return "?";
}

inline const char* slot_name(Slot s) {
    switch (s) {
        case Slot::origin: return "origin";
        case Slot::destination: return "destination";
        case Slot::airline: return "airline";
        case Slot::date: return "date";
        case Slot::time: return "time";
    }
    return "?";
}

inline const char* state_name(DialogState s) {
    switch (s) {
        case DialogState::greeting: return "greeting";
        case DialogState::menu: return "menu";
        case DialogState::choosing: return "choosing";
        case DialogState::collecting: return "collecting";
        case DialogState::confirming: return "confirming";
        case DialogState::closed: return "closed";
    }
    return "?";
}

inline constexpr std::array<Slot, 5> kSlotOrder = {Slot::origin, Slot::destination, Slot::airline, Slot::date,
                                                   Slot::time};

inline const char* slot_question(Slot s) {
    switch (s) {
        case Slot::origin: return "Where are you flying from?";
        case Slot::destination: return "Where are you flying to?";
        case Slot::airline: return "What airline?";
        case Slot::date: return "When are you flying?";
        case Slot::time: return "What time is your flight?";
    }
    return "?";
}

inline const std::array<const char*, 4>& menu_options() {
    static const std::array<const char*, 4> options = {
        "List existing flights", "Check a flight from the existing list", "Add or remove flights from the list",
        "Get flight delay information"};
    return options;
}

inline std::string menu_text(std::string_view lead) {
    std::string out(lead);
    for (const char* o : menu_options()) out += std::string("\n- ") + o;
    return out;
}

inline const std::string& greeting_text() {
    static const std::string text = menu_text("Hello, welcome to FlightStat! What would you like to do?");
    return text;
}

inline constexpr const char* kChooseFlightQuestion =
    "Which flight: your next flight, one from a particular city, or one on a particular date and time?";
inline constexpr const char* kClosingText = "Goodbye, and safe travels!";
inline constexpr std::size_t kRepromptLimit = 3;

struct SlotValues {
    std::optional<std::string> origin;
    std::optional<std::string> destination;
    std::optional<std::string> airline;
    std::optional<Date> date;
    std::optional<ClockTime> time;

    bool operator==(const SlotValues&) const = default;

    bool filled(Slot s) const {
        switch (s) {
            case Slot::origin: return origin.has_value();
            case Slot::destination: return destination.has_value();
            case Slot::airline: return airline.has_value();
            case Slot::date: return date.has_value();
            case Slot::time: return time.has_value();
        }
        return false;
    }
};

struct DialogTurn {
    std::string speaker;  // "user" or "system"
    std::string text;

    bool operator==(const DialogTurn&) const = default;
};

struct DialogSession {
    std::string id;
    DialogState state = DialogState::greeting;
    std::optional<Intent> intent;
    std::optional<CheckVariant> variant;
    SlotValues slots;
    std::optional<UserFlight> target;  // stored flight chosen by check/remove
    std::size_t failures = 0;
    std::vector<DialogTurn> transcript;

    // Required slots in the fixed order for the current intent (and variant).
    std::vector<Slot> required_slots() const {
        if (!intent) return {};
        switch (*intent) {
            case Intent::add_flight:
            case Intent::get_delay: return {kSlotOrder.begin(), kSlotOrder.end()};
            case Intent::check_flight:
            case Intent::remove_flight:
                if (!variant || *variant == CheckVariant::next) return {};
                if (*variant == CheckVariant::by_origin) return {Slot::origin};
                return {Slot::date, Slot::time};
            case Intent::list_flights: return {};
        }
        return {};
    }

    std::optional<Slot> next_slot() const {
        for (Slot s : required_slots())
            if (!slots.filled(s)) return s;
        return std::nullopt;
    }
};

inline nlohmann::json to_json(const SlotValues& s) {
    nlohmann::json j = nlohmann::json::object();
    j["origin"] = s.origin ? nlohmann::json(*s.origin) : nlohmann::json();
    j["destination"] = s.destination ? nlohmann::json(*s.destination) : nlohmann::json();
    j["airline"] = s.airline ? nlohmann::json(*s.airline) : nlohmann::json();
    j["date"] = s.date ? nlohmann::json(s.date->iso()) : nlohmann::json();
    j["time"] = s.time ? nlohmann::json(s.time->str()) : nlohmann::json();
    return j;
}

inline nlohmann::json to_json(const DialogSession& s) {
    nlohmann::json transcript = nlohmann::json::array();
    for (const auto& t : s.transcript) transcript.push_back({{"speaker", t.speaker}, {"text", t.text}});
    const auto next = s.state == DialogState::collecting ? s.next_slot() : std::nullopt;
    return {{"id", s.id},
            {"state", state_name(s.state)},
            {"intent", s.intent ? nlohmann::json(intent_name(*s.intent)) : nlohmann::json()},
            {"variant", s.variant ? nlohmann::json(variant_name(*s.variant)) : nlohmann::json()},
            {"next_slot", next ? nlohmann::json(slot_name(*next)) : nlohmann::json()},
            {"slots", to_json(s.slots)},
            {"transcript", transcript}};
}

// ---------------------------------------------------------------------------
// Utterance parsing. Nothing here throws; failure is an empty result.

namespace detail {

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == ':' || c == '-' || c == '\'') {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline bool has_word(const std::vector<std::string>& ws, std::string_view w) {
    return std::find(ws.begin(), ws.end(), w) != ws.end();
}

inline std::string collapse_spaces(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!out.empty() && out.back() != ' ') out += ' ';
        } else {
            out += c;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

// Removes a leading phrase (case-insensitive, whole words) if present.
inline bool strip_prefix(std::string& s, std::string_view phrase) {
    if (s.size() < phrase.size()) return false;
    if (lower(std::string_view(s).substr(0, phrase.size())) != phrase) return false;
    if (s.size() > phrase.size() && s[phrase.size()] != ' ') return false;
    s.erase(0, std::min(s.size(), phrase.size() + 1));
    return true;
}

inline bool strip_suffix(std::string& s, std::string_view phrase) {
    if (s.size() < phrase.size()) return false;
    const auto at = s.size() - phrase.size();
    if (lower(std::string_view(s).substr(at)) != phrase) return false;
    if (at > 0 && s[at - 1] != ' ') return false;
    s.erase(at == 0 ? 0 : at - 1);
    return true;
}

}  // namespace detail

// Drops politeness and filler tokens and surrounding punctuation.
inline std::string strip_politeness(std::string_view text) {
    std::string s = detail::collapse_spaces(text);
    auto trim_punct = [&] {
        while (!s.empty() && std::string_view(".,!?;").find(s.back()) != std::string_view::npos) s.pop_back();
        while (!s.empty() && std::string_view(".,!?; ").find(s.front()) != std::string_view::npos) s.erase(0, 1);
        while (!s.empty() && s.back() == ' ') s.pop_back();
    };
    static const std::array<std::string_view, 8> lead = {"please", "um", "uh", "well", "ok", "okay", "so", "hmm"};
    static const std::array<std::string_view, 5> tail = {"please", "thanks", "thank you", "thank you very much",
                                                         "thx"};
    bool changed = true;
    while (changed) {
        changed = false;
        trim_punct();
        for (auto p : lead) changed |= detail::strip_prefix(s, p);
        for (auto p : tail) changed |= detail::strip_suffix(s, p);
    }
    return s;
}

// First match in table order wins.
inline std::optional<Intent> detect_intent(std::string_view text) {
    static const std::vector<std::pair<std::vector<std::string_view>, Intent>> table = {
        {{"check", "status"}, Intent::check_flight},
        {{"delay", "delays", "delayed"}, Intent::get_delay},
        {{"add"}, Intent::add_flight},
        {{"remove", "delete"}, Intent::remove_flight},
        {{"list", "show"}, Intent::list_flights},
    };
    const auto ws = detail::words(text);
    for (const auto& [keys, intent] : table)
        for (auto k : keys)
            if (detail::has_word(ws, k)) return intent;
    return std::nullopt;
}

// ISO date anywhere in the text, or "today" / "tomorrow" relative to `today`.
inline std::optional<Date> parse_date_slot(std::string_view text, Date today) {
    for (const auto& w : detail::words(text)) {
        if (auto d = Date::parse_iso(w)) return d;
        if (w == "today") return today;
        if (w == "tomorrow") return today.plus_days(1);
    }
    return std::nullopt;
}

// "HH:MM" (24-hour), "H[:MM] am|pm", "Ham", "noon", "midnight".
inline std::optional<ClockTime> parse_time_slot(std::string_view text) {
    const auto ws = detail::words(text);
    auto meridiem = [](std::string_view w) -> int {
        if (w == "am" || w == "a.m") return 0;
        if (w == "pm" || w == "p.m") return 12;
        return -1;
    };
    auto number = [](std::string_view w) -> std::optional<int> {
        if (w.empty() || w.size() > 2) return std::nullopt;
        int v = 0;
        for (char c : w) {
            if (c < '0' || c > '9') return std::nullopt;
            v = v * 10 + (c - '0');
        }
        return v;
    };
    auto hour_minute = [&](std::string_view w) -> std::optional<std::pair<int, int>> {
        const auto colon = w.find(':');
        if (colon == std::string_view::npos) {
            auto h = number(w);
            if (!h) return std::nullopt;
            return std::pair{*h, 0};
        }
        auto h = number(w.substr(0, colon));
        auto m = w.substr(colon + 1);
        if (!h || m.size() != 2) return std::nullopt;
        auto mv = number(m);
        if (!mv || *mv > 59) return std::nullopt;
        return std::pair{*h, *mv};
    };
    auto twelve_hour = [](int h, int m, int add) -> std::optional<ClockTime> {
        if (h < 1 || h > 12) return std::nullopt;
        return ClockTime{h % 12 + add, m};
    };
    for (std::size_t i = 0; i < ws.size(); ++i) {
        const auto& w = ws[i];
        if (w == "noon") return ClockTime{12, 0};
        if (w == "midnight") return ClockTime{0, 0};
        // Glued suffix: "5pm", "5:30am".
        if (w.size() > 2) {
            const int add = meridiem(std::string_view(w).substr(w.size() - 2));
            if (add >= 0)
                if (auto hm = hour_minute(std::string_view(w).substr(0, w.size() - 2)))
                    return twelve_hour(hm->first, hm->second, add);
        }
        if (auto hm = hour_minute(w)) {
            if (i + 1 < ws.size() && meridiem(ws[i + 1]) >= 0) return twelve_hour(hm->first, hm->second, meridiem(ws[i + 1]));
            if (w.find(':') != std::string::npos) {
                if (hm->first > 23) return std::nullopt;
                return ClockTime{hm->first, hm->second};
            }
        }
    }
    return std::nullopt;
}

// Free-text slot value: the utterance minus politeness and the obvious lead-in
// for that slot ("from", "to", "with", ...). Empty means no value.
inline std::optional<std::string> parse_text_slot(std::string_view text, Slot slot) {
    std::string s = strip_politeness(text);
    static const std::vector<std::string_view> common = {"i'm flying", "i am flying", "im flying", "i'm going",
                                                         "i am going", "we're flying", "it's", "it is", "its"};
    for (auto p : common) detail::strip_prefix(s, p);
    std::vector<std::string_view> lead;
    if (slot == Slot::origin) lead = {"leaving from", "departing from", "flying from", "from"};
    if (slot == Slot::destination) lead = {"going to", "flying to", "headed to", "to"};
    if (slot == Slot::airline) lead = {"flying with", "flying on", "with", "on", "by"};
    for (auto p : lead)
        if (detail::strip_prefix(s, p)) break;
    detail::strip_prefix(s, "the");
    s = strip_politeness(s);
    if (s.empty()) return std::nullopt;
    bool any_alpha = std::any_of(s.begin(), s.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
    if (!any_alpha) return std::nullopt;
    return s;
}

enum class YesNo { yes, no };

inline std::optional<YesNo> parse_yes_no(std::string_view text) {
    const auto ws = detail::words(text);
    static const std::array<std::string_view, 4> no = {"no", "nope", "cancel", "don't"};
    static const std::array<std::string_view, 8> yes = {"yes", "yeah", "yep", "sure", "ok", "okay", "correct", "confirm"};
    for (auto w : no)
        if (detail::has_word(ws, w)) return YesNo::no;
    for (auto w : yes)
        if (detail::has_word(ws, w)) return YesNo::yes;
    if (detail::lower(strip_politeness(text)) == "go ahead") return YesNo::yes;
    return std::nullopt;
}

struct VariantChoice {
    CheckVariant variant = CheckVariant::next;
    std::optional<std::string> origin;
};

// Maps a reply to the "which flight" question; by_origin carries the city when
// one follows "from". Date and time are always asked for afterwards.
inline std::optional<VariantChoice> resolve_check_variant(std::string_view text) {
    const auto ws = detail::words(text);
    if (detail::has_word(ws, "next") || detail::has_word(ws, "upcoming") || detail::has_word(ws, "soonest"))
        return VariantChoice{CheckVariant::next, std::nullopt};
    const std::string low = detail::lower(text);
    const auto from = low.find("from ");
    if (from != std::string::npos || detail::has_word(ws, "city") || detail::has_word(ws, "origin")) {
        VariantChoice c{CheckVariant::by_origin, std::nullopt};
        if (from != std::string::npos) {
            std::string rest = strip_politeness(std::string_view(text).substr(from + 5));
            for (auto article : {"a", "the", "my"}) detail::strip_prefix(rest, article);
            for (auto filler : {"particular", "specific", "certain"}) detail::strip_prefix(rest, filler);
            const auto rl = detail::lower(rest);
            if (!rest.empty() && rl != "city" && rl != "a city") c.origin = rest;
        }
        return c;
    }
    static const std::array<std::string_view, 7> when = {"date", "time", "when", "day", "today", "tomorrow", "on"};
    for (auto w : when)
        if (detail::has_word(ws, w)) return VariantChoice{CheckVariant::by_datetime, std::nullopt};
    if (parse_time_slot(text) || parse_date_slot(text, Date{})) return VariantChoice{CheckVariant::by_datetime, std::nullopt};
    return std::nullopt;
}

inline bool is_goodbye(std::string_view text) {
    const auto ws = detail::words(text);
    for (auto w : {"bye", "goodbye", "quit", "exit"})
        if (detail::has_word(ws, w)) return true;
    return false;
}

inline bool is_cancel(std::string_view text) {
    const auto s = detail::lower(strip_politeness(text));
    return s == "cancel" || s == "menu" || s == "main menu" || s == "start over" || s == "never mind";
}

// ---------------------------------------------------------------------------
// Engine

struct DelayEstimate {
    double minutes = 0;
    std::string model;
    std::vector<std::string> provenance;
};

struct DialogContext {
    FlightBook* flights = nullptr;
    std::function<DelayEstimate(const UserFlight&)> predict;
    std::function<Timestamp()> clock = now_utc;
};

struct TurnResult {
    std::string text;
    // Body of the prediction to log (sequence and timestamp unset).
    std::optional<PredictionEvent> event;
    std::optional<std::string> error;  // error kind when an operation failed
};

inline std::string new_session_id() {
    static std::mutex mutex;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mutex);
    char buf[24];
    std::snprintf(buf, sizeof buf, "s-%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

inline std::string describe_flight(const UserFlight& f) {
    return "from " + f.origin + " to " + f.destination + " with " + f.airline + " on " + f.date.iso() + " at " +
           f.time.str();
}

// "delayed about N minutes" above the 15-minute threshold, otherwise "on time".
inline std::string delay_phrase(double minutes) {
    if (minutes > kDelayThresholdMinutes)
        return "delayed about " + std::to_string(static_cast<long long>(std::lround(minutes))) + " minutes";
    return "on time";
}

inline DialogSession start_session(std::string id = new_session_id()) {
    DialogSession s;
    s.id = std::move(id);
    s.state = DialogState::menu;
    s.transcript.push_back({"system", greeting_text()});
    return s;
}

namespace detail {

inline void reset_to_menu(DialogSession& s) {
    s.state = DialogState::menu;
    s.intent.reset();
    s.variant.reset();
    s.slots = {};
    s.target.reset();
    s.failures = 0;
}

inline const std::string& after_task_text() {
    static const std::string text = menu_text("Thank you for using FlightStat. What else can I do for you?");
    return text;
}

inline UserFlight flight_from_slots(const SlotValues& v) {
    return {"", *v.origin, *v.destination, *v.airline, *v.date, *v.time};
}

inline std::pair<Date, ClockTime> local_now(const DialogContext& ctx) {
    const auto t = ctx.clock();
    const auto day = std::chrono::floor<std::chrono::days>(t);
    const auto minutes = std::chrono::duration_cast<std::chrono::minutes>(t - day).count();
    return {Date::from_sys_days(day), ClockTime::from_minutes(static_cast<int>(minutes))};
}

inline std::string confirmation_text(const DialogSession& s) {
    switch (*s.intent) {
        case Intent::add_flight:
            return "You're flying " + describe_flight(flight_from_slots(s.slots)) + ". Should I add this flight?";
        case Intent::get_delay:
            return "You're flying " + describe_flight(flight_from_slots(s.slots)) +
                   ". Should I look up the expected delay?";
        case Intent::remove_flight:
            return "I found your flight " + describe_flight(*s.target) + ". Should I remove it?";
        case Intent::check_flight:
            return "I found your flight " + describe_flight(*s.target) + ". Should I check its delay?";
        case Intent::list_flights: break;
    }
    return "Should I go ahead?";
}

inline TurnResult estimate(const UserFlight& f, const DialogContext& ctx) {
    TurnResult r;
    if (!ctx.predict) {
        r.text = "Sorry, delay predictions are not available right now.";
        r.error = "unavailable";
        return r;
    }
    try {
        auto est = ctx.predict(f);
        r.text = "Your flight " + describe_flight(f) + " is expected to be " + delay_phrase(est.minutes) + ".";
        PredictionEvent e;
        e.model = est.model;
        e.request = {f.origin, f.destination, f.airline, f.date.iso(), f.time.str()};
        e.predicted_delay = est.minutes;
        e.provenance = est.provenance;
        r.event = std::move(e);
    } catch (const Error& err) {
        r.text = std::string("Sorry, I couldn't estimate a delay for that flight: ") + err.what() + ".";
        r.error = err.kind();
    }
    return r;
}

inline std::string list_text(const std::vector<UserFlight>& flights) {
    if (flights.empty()) return "You have no saved flights.";
    std::string out = "You have " + std::to_string(flights.size()) + (flights.size() == 1 ? " flight:" : " flights:");
    for (std::size_t i = 0; i < flights.size(); ++i)
        out += "\n" + std::to_string(i + 1) + ". " + describe_flight(flights[i]);
    return out;
}

// Executes a confirmed intent (or list, which needs no confirmation).
inline TurnResult fulfill(DialogSession& s, const DialogContext& ctx) {
    TurnResult r;
    try {
        switch (*s.intent) {
            case Intent::list_flights:
                r.text = list_text(ctx.flights ? ctx.flights->list() : std::vector<UserFlight>{});
                break;
            case Intent::add_flight: {
                if (!ctx.flights) throw IoError("no flight list configured");
                auto f = flight_from_slots(s.slots);
                ctx.flights->add(f);
                r.text = "Done, I added your flight " + describe_flight(f) + ".";
                break;
            }
            case Intent::remove_flight:
                if (!ctx.flights) throw IoError("no flight list configured");
                ctx.flights->remove(s.target->id);
                r.text = "Done, I removed your flight " + describe_flight(*s.target) + ".";
                break;
            case Intent::check_flight: r = estimate(*s.target, ctx); break;
            case Intent::get_delay: r = estimate(flight_from_slots(s.slots), ctx); break;
        }
    } catch (const Error& err) {
        r.text = std::string("Sorry, something went wrong: ") + err.what() + ".";
        r.error = err.kind();
    }
    r.text += " " + after_task_text();
    reset_to_menu(s);
    return r;
}

// Looks up the stored flight for check/remove once its variant slots are in.
inline TurnResult select_target(DialogSession& s, const DialogContext& ctx) {
    FlightQuery q;
    switch (*s.variant) {
        case CheckVariant::next: q.next_upcoming = true; break;
        case CheckVariant::by_origin: q.origin = s.slots.origin; break;
        case CheckVariant::by_datetime:
            q.date = s.slots.date;
            q.time = s.slots.time;
            break;
    }
    const auto [today, now] = local_now(ctx);
    std::vector<UserFlight> found;
    if (ctx.flights) found = ctx.flights->find(q, today, now);
    if (found.empty()) {
        TurnResult r;
        r.text = *s.variant == CheckVariant::next ? "You have no upcoming flights." : "I couldn't find a matching flight.";
        r.text += " " + after_task_text();
        reset_to_menu(s);
        return r;
    }
    s.target = found.front();
    s.state = DialogState::confirming;
    return {confirmation_text(s), std::nullopt, std::nullopt};
}

// Asks the next slot, or moves on once every required slot is filled.
inline TurnResult advance(DialogSession& s, const DialogContext& ctx) {
    if (auto next = s.next_slot()) {
        s.state = DialogState::collecting;
        return {slot_question(*next), std::nullopt, std::nullopt};
    }
    if (*s.intent == Intent::check_flight || *s.intent == Intent::remove_flight) return select_target(s, ctx);
    s.state = DialogState::confirming;
    return {confirmation_text(s), std::nullopt, std::nullopt};
}

inline bool fill_slot(DialogSession& s, Slot slot, std::string_view text, const DialogContext& ctx) {
    switch (slot) {
        case Slot::origin: s.slots.origin = parse_text_slot(text, slot); break;
        case Slot::destination: s.slots.destination = parse_text_slot(text, slot); break;
        case Slot::airline: s.slots.airline = parse_text_slot(text, slot); break;
        case Slot::date: s.slots.date = parse_date_slot(text, local_now(ctx).first); break;
        case Slot::time: s.slots.time = parse_time_slot(text); break;
    }
    return s.slots.filled(slot);
}

inline TurnResult failed_parse(DialogSession& s, std::string retry) {
    if (++s.failures >= kRepromptLimit) {
        reset_to_menu(s);
        return {menu_text("Sorry, I'm having trouble understanding. Let's go back to the menu. What would you like to do?"),
                std::nullopt, std::nullopt};
    }
    return {"Sorry, I didn't catch that. " + retry, std::nullopt, std::nullopt};
}

inline TurnResult dispatch(DialogSession& s, std::string_view text, const DialogContext& ctx) {
    if (is_goodbye(text)) {
        reset_to_menu(s);
        s.state = DialogState::closed;
        return {kClosingText, std::nullopt, std::nullopt};
    }
    if (s.state != DialogState::menu && is_cancel(text)) {
        reset_to_menu(s);
        return {menu_text("Okay, cancelled. What would you like to do?"), std::nullopt, std::nullopt};
    }
    switch (s.state) {
        case DialogState::greeting:
        case DialogState::menu: {
            auto intent = detect_intent(text);
            if (!intent) {
                ++s.failures;
                return {menu_text("Sorry, I can help with these. What would you like to do?"), std::nullopt,
                        std::nullopt};
            }
            s.failures = 0;
            s.intent = intent;
            if (*intent == Intent::list_flights) return fulfill(s, ctx);
            if (*intent == Intent::check_flight || *intent == Intent::remove_flight) {
                s.state = DialogState::choosing;
                return {kChooseFlightQuestion, std::nullopt, std::nullopt};
            }
            return advance(s, ctx);
        }
        case DialogState::choosing: {
            auto choice = resolve_check_variant(text);
            if (!choice) return failed_parse(s, kChooseFlightQuestion);
            s.failures = 0;
            s.variant = choice->variant;
            if (choice->origin) s.slots.origin = choice->origin;
            return advance(s, ctx);
        }
        case DialogState::collecting: {
            const Slot slot = *s.next_slot();
            if (!fill_slot(s, slot, text, ctx)) return failed_parse(s, slot_question(slot));
            s.failures = 0;
            return advance(s, ctx);
        }
        case DialogState::confirming: {
            auto yn = parse_yes_no(text);
            if (!yn) return failed_parse(s, "Please answer yes or no.");
            if (*yn == YesNo::no) {
                reset_to_menu(s);
                return {menu_text("Okay, I won't do that. What would you like to do?"), std::nullopt, std::nullopt};
            }
            return fulfill(s, ctx);
        }
        case DialogState::closed: break;
    }
    throw SessionClosedError("session " + s.id + " is closed");
}

}  // namespace detail

// One user turn: records both sides in the transcript and returns the reply.
inline TurnResult handle_utterance(DialogSession& s, std::string_view text, const DialogContext& ctx) {
    if (s.state == DialogState::closed) throw SessionClosedError("session " + s.id + " is closed");
    s.transcript.push_back({"user", std::string(text)});
    TurnResult r = detail::dispatch(s, text, ctx);
    s.transcript.push_back({"system", r.text});
    return r;
}

// ---------------------------------------------------------------------------
// Scripted conversations: "USER: ..." and "SYSTEM: ..." lines; '#' comments.
// Each SYSTEM line is compared with the full reply (multi-line replies are
// matched on their first line).

struct ScriptLine {
    std::string speaker;
    std::string text;
    std::size_t line_number = 0;
};

inline std::vector<ScriptLine> parse_dialog_script(std::istream& in) {
    std::vector<ScriptLine> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        std::string_view body(line);
        body.remove_prefix(first);
        ScriptLine sl;
        sl.line_number = n;
        if (body.substr(0, 5) == "USER:") {
            sl.speaker = "user";
            body.remove_prefix(5);
        } else if (body.substr(0, 7) == "SYSTEM:") {
            sl.speaker = "system";
            body.remove_prefix(7);
        } else {
            throw SchemaError("line " + std::to_string(n) + ": expected USER: or SYSTEM:");
        }
        while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
        sl.text = std::string(body);
        out.push_back(std::move(sl));
    }
    return out;
}

struct ScriptMismatch {
    std::size_t line_number = 0;
    std::string expected;
    std::string actual;
};

struct ScriptRun {
    std::vector<DialogTurn> transcript;
    std::vector<ScriptMismatch> mismatches;
    std::vector<PredictionEvent> events;

    bool ok() const { return mismatches.empty(); }
};

inline std::string first_line(std::string_view s) { return std::string(s.substr(0, s.find('\n'))); }

// Replays the USER lines and checks each SYSTEM line against the reply it follows.
inline ScriptRun run_dialog_script(const std::vector<ScriptLine>& script, const DialogContext& ctx,
                                   std::string session_id = "script") {
    ScriptRun run;
    DialogSession s = start_session(std::move(session_id));
    std::string last_reply = s.transcript.back().text;
    for (const auto& line : script) {
        if (line.speaker == "user") {
            if (s.state == DialogState::closed) {
                run.mismatches.push_back({line.line_number, "(open session)", "(session closed)"});
                break;
            }
            auto r = handle_utterance(s, line.text, ctx);
            if (r.event) run.events.push_back(*r.event);
            last_reply = r.text;
        } else {
            const bool match = line.text == last_reply || line.text == first_line(last_reply);
            if (!match) run.mismatches.push_back({line.line_number, line.text, first_line(last_reply)});
        }
    }
    run.transcript = s.transcript;
    return run;
}

}  // namespace flightstat
