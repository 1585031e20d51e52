#include <neuroshow/aer_transport.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

namespace neuroshow::aer {

std::uint32_t pack_raw_word(RawSpike spike)
{
	if (spike.address > kMaxAddress) {
		throw StructuralError("RAW: address " + std::to_string(spike.address) +
		                      " exceeds 24 bits");
	}
	if (spike.value == 0) {
		throw StructuralError("RAW: zero-valued spikes are not transmitted");
	}
	return spike.address |
	       (static_cast<std::uint32_t>(static_cast<std::uint8_t>(spike.value)) << 24);
}

RawSpike unpack_raw_word(std::uint32_t word)
{
	return {word & kMaxAddress, static_cast<std::int8_t>(word >> 24)};
}

Bytes raw_encode(std::span<const RawSpike> spikes)
{
	Bytes out;
	out.reserve(spikes.size() * kRawWordBytes);
	for (const auto &s : spikes) {
		le::put<std::uint32_t>(out, pack_raw_word(s));
	}
	return out;
}

std::vector<RawSpike> raw_decode(ByteView bytes)
{
	if (bytes.size() % kRawWordBytes != 0) {
		throw StructuralError("RAW: stream length is not a multiple of 4");
	}
	std::vector<RawSpike> out;
	out.reserve(bytes.size() / kRawWordBytes);
	for (std::size_t off = 0; off < bytes.size(); off += kRawWordBytes) {
		const RawSpike s = unpack_raw_word(le::get<std::uint32_t>(bytes, off));
		if (s.value == 0) {
			throw StructuralError("RAW: zero value at byte " + std::to_string(off));
		}
		out.push_back(s);
	}
	return out;
}

std::uint32_t pixel_address(int x, int y, Resolution resolution)
{
	if (!resolution.contains(x, y)) {
		throw StructuralError("pixel (" + std::to_string(x) + "," + std::to_string(y) +
		                      ") outside " + to_string(resolution));
	}
	const auto a = static_cast<std::uint64_t>(y) * static_cast<std::uint64_t>(resolution.width) +
	               static_cast<std::uint64_t>(x);
	if (a > kMaxAddress) {
		throw StructuralError("pixel address exceeds 24 bits");
	}
	return static_cast<std::uint32_t>(a);
}

std::int8_t quantize_raw(double value, double scale)
{
	if (!(scale > 0.0)) {
		throw ConfigError("RAW value scale must be positive");
	}
	const double q = std::round(value / scale);
	return static_cast<std::int8_t>(std::clamp(q, -128.0, 127.0));
}

std::vector<RawSpike> quantize_spikes(std::span<const GradedSpike<double>> spikes,
                                      double scale)
{
	std::vector<RawSpike> out;
	out.reserve(spikes.size());
	for (const auto &s : spikes) {
		const std::int8_t q = quantize_raw(s.value, scale);
		if (q != 0) {
			out.push_back({s.address, q});
		}
	}
	return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::uint32_t, 256> make_crc_table()
{
	std::array<std::uint32_t, 256> table{};
	for (std::uint32_t i = 0; i < 256; ++i) {
		std::uint32_t c = i;
		for (int k = 0; k < 8; ++k) {
			c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;  // reflected 0x04C11DB7
		}
		table[i] = c;
	}
	return table;
}

constexpr auto kCrcTable = make_crc_table();

}  // namespace

std::uint32_t crc32(ByteView bytes)
{
	std::uint32_t c = 0xFFFFFFFFu;
	for (std::uint8_t b : bytes) {
		c = kCrcTable[(c ^ b) & 0xFFu] ^ (c >> 8);
	}
	return c ^ 0xFFFFFFFFu;
}

double safe_overhead_per_event(std::size_t count)
{
	if (count == 0) {
		throw ConfigError("overhead per event is undefined for empty frames");
	}
	return static_cast<double>(safe_frame_size(count)) / static_cast<double>(count);
}

Bytes safe_encode(std::span<const SafeRecord> records, std::uint32_t seq,
                  std::uint64_t timestamp)
{
	if (records.size() > kSafeMaxRecords) {
		throw StructuralError("SAFE: " + std::to_string(records.size()) +
		                      " records exceed the u16 count field");
	}
	for (std::size_t i = 1; i < records.size(); ++i) {
		if (records[i].dt_offset < records[i - 1].dt_offset) {
			throw StructuralError("SAFE: dt offsets must be non-decreasing");
		}
	}
	Bytes out;
	out.reserve(safe_frame_size(records.size()));
	le::put<std::uint16_t>(out, kSafeMagic);
	le::put<std::uint8_t>(out, kSafeVersion);
	le::put<std::uint8_t>(out, records.empty() ? 0 : kFlagPayload);
	le::put<std::uint32_t>(out, seq);
	le::put<std::uint64_t>(out, timestamp);
	le::put<std::uint16_t>(out, static_cast<std::uint16_t>(records.size()));
	for (const auto &r : records) {
		le::put<std::uint32_t>(out, r.address);
		le::put<std::int16_t>(out, r.value);
		le::put<std::uint16_t>(out, r.dt_offset);
	}
	le::put<std::uint32_t>(out, crc32(out));
	return out;
}

std::string to_string(SafeError error)
{
	switch (error) {
	case SafeError::None: return "ok";
	case SafeError::BadMagic: return "bad_magic";
	case SafeError::BadVersion: return "bad_version";
	case SafeError::BadCrc: return "bad_crc";
	case SafeError::Truncated: return "truncated";
	case SafeError::Malformed: return "malformed";
	}
	return "unknown";
}

SafeDecodeResult safe_decode(ByteView bytes)
{
	auto fail = [](SafeError e) { return SafeDecodeResult{std::nullopt, e}; };
	if (bytes.size() >= 2 && le::get<std::uint16_t>(bytes, 0) != kSafeMagic) {
		return fail(SafeError::BadMagic);
	}
	if (bytes.size() >= 3 && bytes[2] != kSafeVersion) {
		return fail(SafeError::BadVersion);
	}
	if (bytes.size() < kSafeOverheadBytes) {
		return fail(SafeError::Truncated);
	}
	const std::size_t count = le::get<std::uint16_t>(bytes, 16);
	const std::size_t size = safe_frame_size(count);
	if (bytes.size() < size) {
		return fail(SafeError::Truncated);
	}
	if (bytes.size() > size) {
		// A shorter declared body leaves the CRC at the wrong place; report that
		// first, since it is the usual cause.
		const std::uint32_t stored = le::get<std::uint32_t>(bytes, size - kSafeCrcBytes);
		if (stored != crc32(bytes.first(size - kSafeCrcBytes))) {
			return fail(SafeError::BadCrc);
		}
		return fail(SafeError::Malformed);
	}
	const std::uint32_t stored = le::get<std::uint32_t>(bytes, size - kSafeCrcBytes);
	if (stored != crc32(bytes.first(size - kSafeCrcBytes))) {
		return fail(SafeError::BadCrc);
	}
	SafeFrame frame;
	frame.magic = kSafeMagic;
	frame.version = bytes[2];
	frame.flags = bytes[3];
	frame.seq = le::get<std::uint32_t>(bytes, 4);
	frame.timestamp = le::get<std::uint64_t>(bytes, 8);
	frame.crc = stored;
	const std::uint8_t expected_flags = count > 0 ? kFlagPayload : 0;
	if (frame.flags != expected_flags) {
		return fail(SafeError::Malformed);
	}
	frame.records.reserve(count);
	for (std::size_t i = 0; i < count; ++i) {
		const std::size_t off = kSafeHeaderBytes + i * kSafeRecordBytes;
		SafeRecord r;
		r.address = le::get<std::uint32_t>(bytes, off);
		r.value = le::get<std::int16_t>(bytes, off + 4);
		r.dt_offset = le::get<std::uint16_t>(bytes, off + 6);
		if (!frame.records.empty() && r.dt_offset < frame.records.back().dt_offset) {
			return fail(SafeError::Malformed);
		}
		frame.records.push_back(r);
	}
	return {std::move(frame), SafeError::None};
}

namespace {

void hex_bytes(std::string &out, ByteView bytes, std::size_t off, std::size_t n)
{
	char buf[4];
	for (std::size_t i = 0; i < n && off + i < bytes.size(); ++i) {
		std::snprintf(buf, sizeof buf, "%02X", bytes[off + i]);
		if (i) {
			out += ' ';
		}
		out += buf;
	}
}

void hex_line(std::string &out, ByteView bytes, std::size_t off, std::size_t n,
              const std::string &note)
{
	char head[16];
	std::snprintf(head, sizeof head, "%06zx  ", off);
	out += head;
	std::string hex;
	hex_bytes(hex, bytes, off, n);
	hex.resize(std::max<std::size_t>(hex.size(), 24), ' ');
	out += hex;
	if (!note.empty()) {
		out += "  ; " + note;
	}
	out += '\n';
}

}  // namespace

std::string hex_dump(ByteView bytes)
{
	std::string out;
	for (std::size_t off = 0; off < bytes.size(); off += 16) {
		hex_line(out, bytes, off, std::min<std::size_t>(16, bytes.size() - off), "");
	}
	return out;
}

std::string hex_dump_safe(ByteView bytes)
{
	if (bytes.size() < kSafeOverheadBytes) {
		return hex_dump(bytes);
	}
	std::string out;
	const auto result = safe_decode(bytes);
	const std::size_t count = le::get<std::uint16_t>(bytes, 16);
	hex_line(out, bytes, 0, 2, "magic");
	hex_line(out, bytes, 2, 1, "version " + std::to_string(bytes[2]));
	hex_line(out, bytes, 3, 1, "flags");
	hex_line(out, bytes, 4, 4, "seq " + std::to_string(le::get<std::uint32_t>(bytes, 4)));
	hex_line(out, bytes, 8, 8,
	         "timestamp " + std::to_string(le::get<std::uint64_t>(bytes, 8)) + " us");
	hex_line(out, bytes, 16, 2, "count " + std::to_string(count));
	std::size_t off = kSafeHeaderBytes;
	for (std::size_t i = 0; i < count && off + kSafeRecordBytes + kSafeCrcBytes <= bytes.size();
	     ++i, off += kSafeRecordBytes) {
		hex_line(out, bytes, off, kSafeRecordBytes,
		         "rec " + std::to_string(i) + ": addr " +
		             std::to_string(le::get<std::uint32_t>(bytes, off)) + " value " +
		             std::to_string(le::get<std::int16_t>(bytes, off + 4)) + " dt " +
		             std::to_string(le::get<std::uint16_t>(bytes, off + 6)));
	}
	if (off + kSafeCrcBytes <= bytes.size()) {
		hex_line(out, bytes, off, kSafeCrcBytes, "crc (" + to_string(result.error) + ")");
		off += kSafeCrcBytes;
	}
	if (off < bytes.size()) {
		hex_line(out, bytes, off, bytes.size() - off, "trailing");
	}
	return out;
}

// ---------------------------------------------------------------------------

Bytes SafeSender::send(std::span<const SafeRecord> records, std::uint64_t timestamp)
{
	Bytes frame = safe_encode(records, m_seq, timestamp);
	++m_seq;
	++m_stats.sent;
	m_stats.bytes_sent += frame.size();
	m_stats.events_sent += records.size();
	return frame;
}

Bytes RawSender::send(std::span<const RawSpike> spikes)
{
	Bytes words = raw_encode(spikes);
	m_stats.sent += spikes.size();
	m_stats.bytes_sent += words.size();
	m_stats.events_sent += spikes.size();
	return words;
}

// ---------------------------------------------------------------------------

void ChannelConfig::validate(Profile profile) const
{
	if (!(loss_p >= 0.0 && loss_p <= 1.0) || !(bitflip_p >= 0.0 && bitflip_p <= 1.0)) {
		throw ConfigError("channel probabilities must lie in [0, 1]");
	}
	if (profile == Profile::Raw && reorder_window != 0) {
		throw ConfigError("the RAW profile assumes an in-order local link; "
		                  "reorder_window must be 0");
	}
}

namespace {

constexpr std::uint64_t kStreamSalt = 0x9E3779B97F4A7C15ull;

}  // namespace

Channel::Channel(ChannelConfig config, Profile profile)
    : m_config((config.validate(profile), config)),
      m_loss_rng(config.seed),
      m_flip_rng(config.seed + kStreamSalt),
      m_delay_rng(config.seed + 2 * kStreamSalt)
{
}

void Channel::push(Bytes unit, std::uint64_t send_time)
{
	if (m_counters.pushed > 0 && send_time < m_last_send) {
		throw StructuralError("channel units must be pushed in send-time order");
	}
	const std::size_t index = m_counters.pushed++;
	m_last_send = send_time;

	const bool lost = unit_uniform(m_loss_rng) < m_config.loss_p;
	bool corrupted = false;
	if (!lost && m_config.bitflip_p > 0.0) {
		for (auto &b : unit) {
			if (unit_uniform(m_flip_rng) < m_config.bitflip_p) {
				b ^= static_cast<std::uint8_t>(1u << uniform_index(m_flip_rng, 8));
				corrupted = true;
				++m_counters.bits_flipped;
			}
		}
	}
	std::uint64_t deliver =
	    send_time + m_config.delay_base_us +
	    static_cast<std::uint64_t>(std::floor(static_cast<double>(m_config.delay_jitter_us) *
	                                          unit_uniform(m_delay_rng)));
	// Bound overtaking: never earlier than any unit reorder_window+1 or more places back.
	deliver = std::max(deliver, m_delivery_floor);
	m_recent_times.push_back(deliver);
	while (m_recent_times.size() > m_config.reorder_window) {
		m_delivery_floor = std::max(m_delivery_floor, m_recent_times.front());
		m_recent_times.pop_front();
	}

	if (lost) {
		++m_counters.lost;
		return;
	}
	if (corrupted) {
		++m_counters.corrupted;
	}
	m_pending.push_back({index, std::move(unit), send_time, deliver, corrupted});
}

std::vector<Delivery> Channel::release(bool all)
{
	std::stable_sort(m_pending.begin(), m_pending.end(), [](const auto &a, const auto &b) {
		return a.deliver_time != b.deliver_time ? a.deliver_time < b.deliver_time
		                                        : a.index < b.index;
	});
	const std::uint64_t horizon = m_last_send + m_config.delay_base_us;
	auto split = all ? m_pending.end()
	                 : std::partition_point(m_pending.begin(), m_pending.end(),
	                                        [horizon](const Delivery &d) {
		                                        return d.deliver_time <= horizon;
	                                        });
	std::vector<Delivery> out(std::make_move_iterator(m_pending.begin()),
	                          std::make_move_iterator(split));
	m_pending.erase(m_pending.begin(), split);
	return out;
}

std::vector<Delivery> Channel::poll() { return release(false); }

std::vector<Delivery> Channel::flush() { return release(true); }

std::vector<Delivery> channel_transmit(std::span<const Bytes> units,
                                       std::span<const std::uint64_t> send_times,
                                       const ChannelConfig &config, Profile profile)
{
	if (units.size() != send_times.size()) {
		throw StructuralError("channel_transmit: one send time per unit required");
	}
	Channel channel(config, profile);
	for (std::size_t i = 0; i < units.size(); ++i) {
		channel.push(units[i], send_times[i]);
	}
	return channel.flush();
}

// ---------------------------------------------------------------------------

SafeReceiver::SafeReceiver(std::uint32_t reorder_window, std::uint32_t first_seq)
    : m_window(reorder_window), m_next(first_seq)
{
}

std::int64_t SafeReceiver::unwrap(std::uint32_t seq) const
{
	const auto delta = static_cast<std::int32_t>(seq - static_cast<std::uint32_t>(m_next));
	return m_next + delta;
}

void SafeReceiver::emit(const SafeFrame &frame)
{
	for (const auto &r : frame.records) {
		m_events.push_back({r.address, r.value, frame.timestamp + r.dt_offset});
	}
	m_frames.push_back(frame);
	++m_stats.delivered;
}

void SafeReceiver::drain()
{
	for (auto it = m_buffer.find(m_next); it != m_buffer.end(); it = m_buffer.find(m_next)) {
		emit(it->second);
		m_emitted.insert(m_next);
		m_buffer.erase(it);
		++m_next;
	}
}

void SafeReceiver::advance_to(std::int64_t target)
{
	while (m_next < target) {
		if (auto it = m_buffer.find(m_next); it != m_buffer.end()) {
			emit(it->second);
			m_emitted.insert(m_next);
			m_buffer.erase(it);
		} else {
			m_given_up.insert(m_next);
			++m_missing;
		}
		++m_next;
		drain();
	}
}

void SafeReceiver::ingest(ByteView bytes)
{
	auto decoded = safe_decode(bytes);
	if (!decoded.ok()) {
		++m_stats.corrupted_dropped;
		return;
	}
	const std::int64_t s = unwrap(decoded.frame->seq);
	if (s < m_next) {
		if (m_given_up.erase(s) > 0) {
			--m_missing;
			++m_stats.late_dropped;
		} else {
			++m_stats.duplicate_dropped;
		}
		return;
	}
	if (m_buffer.contains(s)) {
		++m_stats.duplicate_dropped;
		return;
	}
	if (s < m_max_seen) {
		++m_stats.reordered;
	}
	m_max_seen = std::max(m_max_seen, s);
	m_buffer.emplace(s, std::move(*decoded.frame));
	drain();
	if (s - m_next >= static_cast<std::int64_t>(m_window)) {
		advance_to(s - static_cast<std::int64_t>(m_window) + 1);
	}
}

void SafeReceiver::finish(std::uint32_t end_seq)
{
	const std::int64_t end = unwrap(end_seq);
	advance_to(end);
}

std::vector<SafeFrame> SafeReceiver::take_frames() { return std::exchange(m_frames, {}); }

std::vector<ReceivedEvent> SafeReceiver::take_events() { return std::exchange(m_events, {}); }

LinkStats SafeReceiver::stats() const
{
	LinkStats s = m_stats;
	s.lost = m_missing > s.corrupted_dropped ? m_missing - s.corrupted_dropped : 0;
	return s;
}

LinkStats combine(const LinkStats &sender, const LinkStats &receiver)
{
	LinkStats s = receiver;
	s.sent = sender.sent;
	s.bytes_sent = sender.bytes_sent;
	s.events_sent = sender.events_sent;
	return s;
}

}  // namespace neuroshow::aer
