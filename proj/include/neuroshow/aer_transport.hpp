#ifndef NEUROSHOW_AER_TRANSPORT_HPP
#define NEUROSHOW_AER_TRANSPORT_HPP

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <neuroshow/common.hpp>
#include <neuroshow/event_core.hpp>
#include <neuroshow/sigma_delta.hpp>

namespace neuroshow::aer {

// ---------------------------------------------------------------------------
// RAW profile: one little-endian 32-bit word per spike, no framing.
//   bits [23:0]  address
//   bits [31:24] signed 8-bit value (two's complement, never zero)

inline constexpr std::uint32_t kMaxAddress = (1u << 24) - 1;
inline constexpr std::size_t kRawWordBytes = 4;

struct RawSpike {
	std::uint32_t address = 0;
	std::int8_t value = 1;

	friend bool operator==(const RawSpike &, const RawSpike &) = default;
};

std::uint32_t pack_raw_word(RawSpike spike);
RawSpike unpack_raw_word(std::uint32_t word);

Bytes raw_encode(std::span<const RawSpike> spikes);
std::vector<RawSpike> raw_decode(ByteView bytes);

/// Row-major pixel address y * width + x.
std::uint32_t pixel_address(int x, int y, Resolution resolution);

/// round(value / scale), saturated to [-128, 127]. The scale is link metadata.
std::int8_t quantize_raw(double value, double scale);
/// Quantizes graded spikes; spikes that round to zero are not transmitted.
std::vector<RawSpike> quantize_spikes(std::span<const GradedSpike<double>> spikes,
                                      double scale);

// ---------------------------------------------------------------------------
// SAFE profile: framed, sequenced, timestamped and CRC-protected.
//
//   off  size  field
//     0     2  magic 0xAE52
//     2     1  version (1)
//     3     1  flags (bit0: payload present; other bits zero)
//     4     4  seq (wrapping)
//     8     8  timestamp, microseconds since stream epoch
//    16     2  count
//    18   8*n  records: address u32, value i16, dt_offset u16 (us)
//  18+8n    4  CRC-32 over bytes [0, 18+8n)
//
// All fields little-endian.

inline constexpr std::uint16_t kSafeMagic = 0xAE52;
inline constexpr std::uint8_t kSafeVersion = 1;
inline constexpr std::uint8_t kFlagPayload = 0x01;
inline constexpr std::size_t kSafeHeaderBytes = 18;
inline constexpr std::size_t kSafeRecordBytes = 8;
inline constexpr std::size_t kSafeCrcBytes = 4;
inline constexpr std::size_t kSafeOverheadBytes = kSafeHeaderBytes + kSafeCrcBytes;
inline constexpr std::size_t kSafeMaxRecords = 65535;

struct SafeRecord {
	std::uint32_t address = 0;
	std::int16_t value = 0;
	std::uint16_t dt_offset = 0;

	friend bool operator==(const SafeRecord &, const SafeRecord &) = default;
};

struct SafeFrame {
	std::uint16_t magic = kSafeMagic;
	std::uint8_t version = kSafeVersion;
	std::uint8_t flags = 0;
	std::uint32_t seq = 0;
	std::uint64_t timestamp = 0;
	std::vector<SafeRecord> records;
	std::uint32_t crc = 0;

	friend bool operator==(const SafeFrame &, const SafeFrame &) = default;
};

/// CRC-32 (IEEE 802.3): poly 0x04C11DB7 reflected, init and xorout 0xFFFFFFFF.
std::uint32_t crc32(ByteView bytes);

inline constexpr std::size_t safe_frame_size(std::size_t count)
{
	return kSafeOverheadBytes + kSafeRecordBytes * count;
}

/// Bytes on the wire per event for a frame carrying `count` records.
double safe_overhead_per_event(std::size_t count);

Bytes safe_encode(std::span<const SafeRecord> records, std::uint32_t seq,
                  std::uint64_t timestamp);

enum class SafeError { None, BadMagic, BadVersion, BadCrc, Truncated, Malformed };

std::string to_string(SafeError error);

struct SafeDecodeResult {
	std::optional<SafeFrame> frame;
	SafeError error = SafeError::None;

	bool ok() const { return frame.has_value(); }
};

/// Decodes exactly one frame occupying all of `bytes`.
SafeDecodeResult safe_decode(ByteView bytes);

/// Annotated hex listing of a SAFE frame (falls back to plain hex when the
/// header is unreadable).
std::string hex_dump_safe(ByteView bytes);
std::string hex_dump(ByteView bytes);

// ---------------------------------------------------------------------------
// Accounting

struct LinkStats {
	std::uint64_t sent = 0;
	std::uint64_t delivered = 0;
	std::uint64_t lost = 0;
	std::uint64_t corrupted_dropped = 0;
	std::uint64_t duplicate_dropped = 0;
	/// Frames that arrived after their sequence slot was already given up;
	/// counted here instead of in `lost`.
	std::uint64_t late_dropped = 0;
	std::uint64_t reordered = 0;
	std::uint64_t bytes_sent = 0;
	std::uint64_t events_sent = 0;

	double overhead() const
	{
		return events_sent == 0 ? 0.0
		                        : static_cast<double>(bytes_sent) /
		                              static_cast<double>(events_sent);
	}
	std::uint64_t accounted() const
	{
		return delivered + lost + corrupted_dropped + duplicate_dropped + late_dropped;
	}

	friend bool operator==(const LinkStats &, const LinkStats &) = default;
};

/// Assigns sequence numbers and keeps the sender-side counters.
class SafeSender {
public:
	explicit SafeSender(std::uint32_t first_seq = 0) : m_seq(first_seq) {}

	Bytes send(std::span<const SafeRecord> records, std::uint64_t timestamp);

	std::uint32_t next_seq() const { return m_seq; }
	const LinkStats &stats() const { return m_stats; }

private:
	std::uint32_t m_seq;
	LinkStats m_stats;
};

/// Sender counters for the RAW profile (4 bytes per event by construction).
class RawSender {
public:
	Bytes send(std::span<const RawSpike> spikes);
	const LinkStats &stats() const { return m_stats; }

private:
	LinkStats m_stats;
};

// ---------------------------------------------------------------------------
// Lossy channel simulator

enum class Profile { Raw, Safe };

struct ChannelConfig {
	double loss_p = 0.0;
	double bitflip_p = 0.0;  ///< per byte; a hit flips one uniformly chosen bit
	std::uint64_t delay_base_us = 0;
	std::uint64_t delay_jitter_us = 0;
	/// A unit may overtake at most this many earlier units (0 = FIFO).
	std::uint32_t reorder_window = 0;
	std::uint64_t seed = 0;

	void validate(Profile profile) const;
};

struct Delivery {
	std::size_t index = 0;  ///< position in send order
	Bytes bytes;
	std::uint64_t send_time = 0;
	std::uint64_t deliver_time = 0;
	bool corrupted = false;

	friend bool operator==(const Delivery &, const Delivery &) = default;
};

struct ChannelCounters {
	std::uint64_t pushed = 0;
	std::uint64_t lost = 0;
	std::uint64_t corrupted = 0;
	std::uint64_t bits_flipped = 0;
};

/**
 * Streaming channel. Each pushed unit draws, from independent seeded streams:
 * one loss variate, then (if kept) per-byte corruption variates, and one delay
 * variate. Delivery time is send + base + floor(jitter * U), raised if needed
 * so no unit overtakes more than reorder_window predecessors. Units are
 * released in (deliver_time, index) order once no later push can precede them.
 *
 * Loss uses Rng(seed) directly: unit i is lost iff the i-th unit_uniform()
 * draw is below loss_p.
 */
class Channel {
public:
	Channel(ChannelConfig config, Profile profile);

	void push(Bytes unit, std::uint64_t send_time);
	/// Deliveries that can no longer be preceded by a future push.
	std::vector<Delivery> poll();
	/// All remaining deliveries.
	std::vector<Delivery> flush();

	const ChannelCounters &counters() const { return m_counters; }

private:
	std::vector<Delivery> release(bool all);

	ChannelConfig m_config;
	Rng m_loss_rng;
	Rng m_flip_rng;
	Rng m_delay_rng;
	std::deque<std::uint64_t> m_recent_times;
	std::uint64_t m_delivery_floor = 0;
	std::uint64_t m_last_send = 0;
	std::vector<Delivery> m_pending;
	ChannelCounters m_counters;
};

std::vector<Delivery> channel_transmit(std::span<const Bytes> units,
                                       std::span<const std::uint64_t> send_times,
                                       const ChannelConfig &config, Profile profile);

// ---------------------------------------------------------------------------
// Receiver

struct ReceivedEvent {
	std::uint32_t address = 0;
	std::int16_t value = 0;
	std::uint64_t t = 0;  ///< frame timestamp + dt_offset

	friend bool operator==(const ReceivedEvent &, const ReceivedEvent &) = default;
};

/**
 * Re-sequences SAFE frames. Frames ahead of the expected sequence number are
 * held while they fit in the reorder window; once a frame arrives beyond the
 * window, missing slots are given up and counted lost. Duplicates and frames
 * failing verification are dropped and counted.
 */
class SafeReceiver {
public:
	explicit SafeReceiver(std::uint32_t reorder_window = 8, std::uint32_t first_seq = 0);

	void ingest(ByteView bytes);
	/// Gives up on everything before `end_seq` (exclusive), e.g. at stream end.
	void finish(std::uint32_t end_seq);

	std::vector<SafeFrame> take_frames();
	std::vector<ReceivedEvent> take_events();
	/// Receiver-side counters; sender fields are zero.
	LinkStats stats() const;

private:
	std::int64_t unwrap(std::uint32_t seq) const;
	void emit(const SafeFrame &frame);
	void drain();
	void advance_to(std::int64_t target);

	std::uint32_t m_window;
	std::int64_t m_next;
	std::int64_t m_max_seen = -1;
	std::map<std::int64_t, SafeFrame> m_buffer;
	std::set<std::int64_t> m_emitted;
	std::set<std::int64_t> m_given_up;
	std::vector<SafeFrame> m_frames;
	std::vector<ReceivedEvent> m_events;
	LinkStats m_stats;
	std::uint64_t m_missing = 0;
};

/// Sender counters plus receiver counters, with `lost` excluding slots that
/// are explained by a corrupted arrival.
LinkStats combine(const LinkStats &sender, const LinkStats &receiver);

}  // namespace neuroshow::aer

#endif  // NEUROSHOW_AER_TRANSPORT_HPP
