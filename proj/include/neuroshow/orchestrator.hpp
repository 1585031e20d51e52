#ifndef NEUROSHOW_ORCHESTRATOR_HPP
#define NEUROSHOW_ORCHESTRATOR_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace neuroshow {

enum class ShowState { Idle, Conversing, Calibrating, Solo, Duet, Teaching };
enum class Intention { AskSolo, AskDuet, AskTeaching, StartConversation, RequestCalibration, Done, None };

inline constexpr std::array kAllStates{ShowState::Idle,  ShowState::Conversing,
                                       ShowState::Calibrating, ShowState::Solo,
                                       ShowState::Duet,  ShowState::Teaching};
inline constexpr std::array kAllIntentions{
    Intention::AskSolo,           Intention::AskDuet, Intention::AskTeaching,
    Intention::StartConversation, Intention::RequestCalibration, Intention::Done,
    Intention::None};

std::string to_string(ShowState state);
std::string to_string(Intention intent);
std::optional<ShowState> parse_state(std::string_view name);
std::optional<Intention> parse_intention(std::string_view name);

/// Task-layer state: the active mode plus the mode to resume after calibration.
struct FsmState {
	ShowState state = ShowState::Idle;
	ShowState calibration_return = ShowState::Idle;

	friend bool operator==(const FsmState &, const FsmState &) = default;
};

/// Total transition function. Calibrating + Done resumes the stored requestor.
FsmState transition(const FsmState &current, Intention intent);
/// Convenience form that treats `state` as having no stored requestor.
ShowState transition(ShowState state, Intention intent);

enum class Module { Tracker, ThereminSynth, GuiDuet, Conversation };

inline constexpr std::array kAllModules{Module::Tracker, Module::ThereminSynth,
                                        Module::GuiDuet, Module::Conversation};

std::string to_string(Module module);
/// Throws StructuralError for an unknown name.
Module parse_module(std::string_view name);

/// Gate per module; the fixed-size array makes the map total by construction.
struct ControlSignals {
	std::array<bool, kAllModules.size()> gates{};

	bool on(Module m) const { return gates[static_cast<std::size_t>(m)]; }
	void set(Module m, bool value) { gates[static_cast<std::size_t>(m)] = value; }

	friend bool operator==(const ControlSignals &, const ControlSignals &) = default;
};

ControlSignals control_signals(ShowState state);
/// `tracker:on theremin_synth:off ...`
std::string format_signals(const ControlSignals &signals);

struct Route {
	std::string name;
	Module source = Module::Tracker;
	Module destination = Module::ThereminSynth;
	bool enabled = false;
};

/// Routes between modules; enabled flags come only from ControlSignals.
class RoutingTable {
public:
	/// tracker->theremin_synth, tracker->gui_duet, conversation->theremin_synth.
	static RoutingTable standard();

	void add(std::string name, Module source, Module destination);
	/// Name-based form; unknown module names throw StructuralError.
	void add(std::string name, std::string_view source, std::string_view destination);
	void derive(const ControlSignals &signals);

	const Route *find(std::string_view name) const;
	const std::vector<Route> &routes() const { return m_routes; }

private:
	std::vector<Route> m_routes;
};

struct Message {
	std::string route;
	std::string payload;

	friend bool operator==(const Message &, const Message &) = default;
};

struct RoutingResult {
	std::vector<Message> delivered;
	std::uint64_t dropped = 0;
};

/// Delivers a message iff both endpoint gates of its route are on. Messages on
/// unknown routes throw StructuralError.
RoutingResult route_messages(const ControlSignals &signals, const RoutingTable &table,
                             std::span<const Message> inbox);

struct ScenarioStep {
	std::uint64_t t_ms = 0;
	Intention intent = Intention::None;

	friend bool operator==(const ScenarioStep &, const ScenarioStep &) = default;
};

/// Lines `AT <t_ms> INTENT <name>`; times must be non-decreasing.
std::vector<ScenarioStep> parse_scenario(const std::string &text);
std::string format_scenario(std::span<const ScenarioStep> steps);

struct TraceEntry {
	std::uint64_t t_ms = 0;
	Intention intent = Intention::None;
	FsmState state;
	ControlSignals signals;

	friend bool operator==(const TraceEntry &, const TraceEntry &) = default;
};

/// Replays a scenario from Idle, recording state and gates after each step.
std::vector<TraceEntry> replay(std::span<const ScenarioStep> steps);

}  // namespace neuroshow

#endif  // NEUROSHOW_ORCHESTRATOR_HPP
