#include <neuroshow/orchestrator.hpp>

#include <sstream>

#include <neuroshow/common.hpp>

namespace neuroshow {

namespace {

constexpr std::array<std::string_view, kAllStates.size()> kStateNames{
    "idle", "conversing", "calibrating", "solo", "duet", "teaching"};
constexpr std::array<std::string_view, kAllIntentions.size()> kIntentNames{
    "ask_solo", "ask_duet", "ask_teaching", "start_conversation",
    "request_calibration", "done", "none"};
constexpr std::array<std::string_view, kAllModules.size()> kModuleNames{
    "tracker", "theremin_synth", "gui_duet", "conversation"};

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(std::string_view name,
                           const std::array<std::string_view, N> &names)
{
	for (std::size_t i = 0; i < N; ++i) {
		if (names[i] == name) {
			return static_cast<Enum>(i);
		}
	}
	return std::nullopt;
}

bool is_performance(ShowState s)
{
	return s == ShowState::Solo || s == ShowState::Duet || s == ShowState::Teaching;
}

}  // namespace

std::string to_string(ShowState state)
{
	return std::string(kStateNames[static_cast<std::size_t>(state)]);
}

std::string to_string(Intention intent)
{
	return std::string(kIntentNames[static_cast<std::size_t>(intent)]);
}

std::string to_string(Module module)
{
	return std::string(kModuleNames[static_cast<std::size_t>(module)]);
}

std::optional<ShowState> parse_state(std::string_view name)
{
	return lookup<ShowState>(name, kStateNames);
}

std::optional<Intention> parse_intention(std::string_view name)
{
	return lookup<Intention>(name, kIntentNames);
}

Module parse_module(std::string_view name)
{
	if (auto m = lookup<Module>(name, kModuleNames)) {
		return *m;
	}
	throw StructuralError("unknown module '" + std::string(name) + "'");
}

FsmState transition(const FsmState &current, Intention intent)
{
	FsmState next = current;
	const ShowState s = current.state;
	switch (intent) {
	case Intention::RequestCalibration:
		if (s != ShowState::Calibrating) {
			next.calibration_return = s;
		}
		next.state = ShowState::Calibrating;
		break;
	case Intention::StartConversation:
		if (s == ShowState::Idle) {
			next.state = ShowState::Conversing;
		}
		break;
	case Intention::AskSolo:
	case Intention::AskDuet:
	case Intention::AskTeaching:
		if (s == ShowState::Conversing) {
			next.state = intent == Intention::AskSolo   ? ShowState::Solo
			             : intent == Intention::AskDuet ? ShowState::Duet
			                                            : ShowState::Teaching;
		}
		break;
	case Intention::Done:
		if (s == ShowState::Calibrating) {
			next.state = current.calibration_return;
		} else if (is_performance(s)) {
			next.state = ShowState::Conversing;
		}
		break;
	case Intention::None:
		break;
	}
	return next;
}

ShowState transition(ShowState state, Intention intent)
{
	return transition(FsmState{state, state}, intent).state;
}

ControlSignals control_signals(ShowState state)
{
	ControlSignals sig;
	switch (state) {
	case ShowState::Idle:
		break;
	case ShowState::Conversing:
		sig.set(Module::Conversation, true);
		break;
	case ShowState::Calibrating:
		sig.set(Module::Tracker, true);
		sig.set(Module::ThereminSynth, true);
		break;
	case ShowState::Solo:
		sig.set(Module::ThereminSynth, true);
		break;
	case ShowState::Duet:
		sig.set(Module::Tracker, true);
		sig.set(Module::ThereminSynth, true);
		sig.set(Module::GuiDuet, true);
		break;
	case ShowState::Teaching:
		sig.set(Module::Tracker, true);
		sig.set(Module::GuiDuet, true);
		break;
	}
	return sig;
}

std::string format_signals(const ControlSignals &signals)
{
	std::string out;
	for (Module m : kAllModules) {
		if (!out.empty()) {
			out += ' ';
		}
		out += to_string(m) + (signals.on(m) ? ":on" : ":off");
	}
	return out;
}

RoutingTable RoutingTable::standard()
{
	RoutingTable table;
	table.add("tracker->theremin_synth", Module::Tracker, Module::ThereminSynth);
	table.add("tracker->gui_duet", Module::Tracker, Module::GuiDuet);
	table.add("conversation->theremin_synth", Module::Conversation, Module::ThereminSynth);
	return table;
}

void RoutingTable::add(std::string name, Module source, Module destination)
{
	if (find(name) != nullptr) {
		throw StructuralError("duplicate route '" + name + "'");
	}
	m_routes.push_back({std::move(name), source, destination, false});
}

void RoutingTable::add(std::string name, std::string_view source, std::string_view destination)
{
	add(std::move(name), parse_module(source), parse_module(destination));
}

void RoutingTable::derive(const ControlSignals &signals)
{
	for (Route &r : m_routes) {
		r.enabled = signals.on(r.source) && signals.on(r.destination);
	}
}

const Route *RoutingTable::find(std::string_view name) const
{
	for (const Route &r : m_routes) {
		if (r.name == name) {
			return &r;
		}
	}
	return nullptr;
}

RoutingResult route_messages(const ControlSignals &signals, const RoutingTable &table,
                             std::span<const Message> inbox)
{
	RoutingResult result;
	for (const Message &msg : inbox) {
		const Route *r = table.find(msg.route);
		if (r == nullptr) {
			throw StructuralError("message on unknown route '" + msg.route + "'");
		}
		if (signals.on(r->source) && signals.on(r->destination)) {
			result.delivered.push_back(msg);
		} else {
			++result.dropped;
		}
	}
	return result;
}

std::vector<ScenarioStep> parse_scenario(const std::string &text)
{
	std::vector<ScenarioStep> steps;
	std::istringstream in(text);
	std::string line;
	int lineno = 0;
	while (std::getline(in, line)) {
		++lineno;
		if (auto hash = line.find('#'); hash != std::string::npos) {
			line.erase(hash);
		}
		std::istringstream ls(line);
		std::string at;
		if (!(ls >> at)) {
			continue;
		}
		auto fail = [&](const std::string &what) {
			return StructuralError("scenario line " + std::to_string(lineno) + ": " + what);
		};
		ScenarioStep step;
		std::string kw;
		std::string name;
		std::string extra;
		if (at != "AT" || !(ls >> step.t_ms >> kw >> name) || kw != "INTENT" || (ls >> extra)) {
			throw fail("expected 'AT <t_ms> INTENT <name>'");
		}
		auto intent = parse_intention(name);
		if (!intent) {
			throw fail("unknown intention '" + name + "'");
		}
		step.intent = *intent;
		if (!steps.empty() && step.t_ms < steps.back().t_ms) {
			throw fail("times must be non-decreasing");
		}
		steps.push_back(step);
	}
	return steps;
}

std::string format_scenario(std::span<const ScenarioStep> steps)
{
	std::string out;
	for (const ScenarioStep &s : steps) {
		out += "AT " + std::to_string(s.t_ms) + " INTENT " + to_string(s.intent) + '\n';
	}
	return out;
}

std::vector<TraceEntry> replay(std::span<const ScenarioStep> steps)
{
	std::vector<TraceEntry> trace;
	FsmState fsm;
	for (const ScenarioStep &s : steps) {
		fsm = transition(fsm, s.intent);
		trace.push_back({s.t_ms, s.intent, fsm, control_signals(fsm.state)});
	}
	return trace;
}

}  // namespace neuroshow
