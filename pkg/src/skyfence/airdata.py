"""Cooperative-traffic channel: ADS-B (Mode S DF17/18) and NMEA GPS decoding.

Input is already-demodulated 112-bit extended squitter frames, one
28-hex-char frame per line with an optional "@timestamp_ms " prefix.
Frames failing the CRC-24 parity check are dropped. Supported payloads:

- typecode 1-4    aircraft identification (callsign + emitter category)
- typecode 9-18   airborne position (CPR even/odd pairing, barometric alt)
- typecode 19     airborne velocity, subtypes 1/2 (ground speed)

Surface positions (TC 5-8) are ignored: the system watches airspace.
CPR decoding is the globally-unambiguous even/odd method; an encoder is
included so simulated aircraft can emit real frames and for round-trip
verification. Decoded aircraft feed a dual store: current tracks keyed by
ICAO address (stale after 60 s) and a 1 Hz position history ring per
aircraft for the console's trail display.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .core import GeoPosition, TargetClass, Timestamp, ValidationError

CRC_GENERATOR = 0x1FFF409  # 25-bit Mode S parity polynomial
FRAME_BITS = 112
FRAME_BYTES = 14

NZ = 15  # latitude zones per hemisphere
CPR_SCALE = 1 << 17  # 17-bit encodings
CPR_MAX_PAIR_AGE_MS = 10_000

STALE_AFTER_MS = 60_000
HISTORY_PERIOD_MS = 1_000
HISTORY_CAPACITY = 600  # 10 minutes at 1 Hz

# Mode S 6-bit character set for identification messages.
_CALLSIGN_CHARSET = "#ABCDEFGHIJKLMNOPQRSTUVWXYZ##### ###############0123456789######"


class DecodeError(ValueError):
    """Frame or sentence cannot be decoded (bad length, parity, fields)."""


def crc24(frame: bytes) -> int:
    """Mode S CRC-24 remainder over the full frame.

    Valid DF17/18 frames carry parity in the trailing PI field, so the
    remainder over all 112 bits is zero.
    """
    if len(frame) != FRAME_BYTES:
        raise DecodeError(f"expected {FRAME_BYTES}-byte frame, got {len(frame)}")
    bits = int.from_bytes(frame, "big")
    for i in range(FRAME_BITS - 1, 23, -1):
        if bits & (1 << i):
            bits ^= CRC_GENERATOR << (i - 24)
    return bits & 0xFFFFFF


@dataclass(frozen=True)
class ModeSFrame:
    """A parity-checked 112-bit extended squitter frame."""

    df: int
    capability: int
    icao: int
    me: int  # 56-bit message field
    t: Timestamp

    @property
    def typecode(self) -> int:
        return (self.me >> 51) & 0x1F


def parse_frame(hex_frame: str, t: Timestamp = 0) -> ModeSFrame:
    """Parse and parity-check one hex frame; DF17/18 only."""
    raw = hex_frame.strip()
    if len(raw) != 28:
        raise DecodeError(f"expected 28 hex chars, got {len(raw)!r}")
    try:
        data = bytes.fromhex(raw)
    except ValueError as exc:
        raise DecodeError(f"bad hex frame: {raw!r}") from exc
    df = data[0] >> 3
    if df not in (17, 18):
        raise DecodeError(f"unsupported downlink format {df}")
    if crc24(data) != 0:
        raise DecodeError("CRC-24 parity failure")
    bits = int.from_bytes(data, "big")
    return ModeSFrame(
        df=df,
        capability=data[0] & 0x7,
        icao=(bits >> 80) & 0xFFFFFF,
        me=(bits >> 24) & (1 << 56) - 1,
        t=t,
    )


def decode_callsign(me: int) -> str:
    """Eight 6-bit charset symbols from an identification message."""
    tc = (me >> 51) & 0x1F
    if not 1 <= tc <= 4:
        raise DecodeError(f"typecode {tc} is not an identification message")
    chars = []
    for k in range(8):
        chars.append(_CALLSIGN_CHARSET[(me >> (42 - 6 * k)) & 0x3F])
    return "".join(chars).rstrip()


def decode_category(typecode: int, category: int) -> TargetClass:
    """Map the emitter category field onto the system's target classes.

    Set A rotorcraft -> helicopter, set B UAV -> drone, an empty category
    field -> no_data, anything else powered -> airplane.
    """
    if category == 0:
        return TargetClass.NO_DATA
    if typecode == 4 and category == 7:
        return TargetClass.HELICOPTER
    if typecode == 3 and category == 6:
        return TargetClass.DRONE
    return TargetClass.AIRPLANE


@dataclass(frozen=True)
class CprFrame:
    """One 17-bit lat/lon encoding with its odd/even flag and receive time."""

    odd: bool
    lat_cpr: int
    lon_cpr: int
    altitude_ft: int | None
    t: Timestamp


@dataclass(frozen=True)
class CprFramePair:
    even: CprFrame
    odd: CprFrame

    def __post_init__(self):
        if self.even.odd or not self.odd.odd:
            raise ValidationError("pair must hold one even and one odd frame")


def decode_altitude(alt_field: int) -> int | None:
    """12-bit barometric altitude; only the Q=1 (25 ft) encoding is used."""
    if alt_field == 0:
        return None  # altitude unavailable
    if not (alt_field >> 4) & 1:
        return None  # Q=0 gray-coded 100 ft encoding: out of scope
    n = ((alt_field >> 5) << 4) | (alt_field & 0xF)
    return 25 * n - 1000


def parse_position_frame(me: int, t: Timestamp) -> CprFrame:
    tc = (me >> 51) & 0x1F
    if not 9 <= tc <= 18:
        raise DecodeError(f"typecode {tc} is not an airborne position")
    return CprFrame(
        odd=bool((me >> 34) & 1),
        lat_cpr=(me >> 17) & 0x1FFFF,
        lon_cpr=me & 0x1FFFF,
        altitude_ft=decode_altitude((me >> 36) & 0xFFF),
        t=t,
    )


def _nl(lat_deg: float) -> int:
    """Longitude zone count at a latitude (59 at the equator, 1 near poles)."""
    if abs(lat_deg) >= 87.0:
        return 1
    a = 1 - math.cos(math.pi / (2 * NZ))
    b = math.cos(math.radians(abs(lat_deg))) ** 2
    return max(math.floor(2 * math.pi / math.acos(1 - a / b)), 1)


def decode_position(pair: CprFramePair) -> GeoPosition:
    """Globally-unambiguous CPR decode from an even/odd pair.

    Fails when the frames are too far apart in time, straddle a longitude
    zone boundary, or decode into the polar |lat| >= 87 region.
    """
    if abs(pair.even.t - pair.odd.t) > CPR_MAX_PAIR_AGE_MS:
        raise DecodeError("even/odd frames more than 10 s apart")

    dlat_even = 360.0 / (4 * NZ)
    dlat_odd = 360.0 / (4 * NZ - 1)
    ye = pair.even.lat_cpr / CPR_SCALE
    yo = pair.odd.lat_cpr / CPR_SCALE
    xe = pair.even.lon_cpr / CPR_SCALE
    xo = pair.odd.lon_cpr / CPR_SCALE

    j = math.floor(59 * ye - 60 * yo + 0.5)
    lat_even = dlat_even * (j % 60 + ye)
    lat_odd = dlat_odd * (j % 59 + yo)
    if lat_even >= 270:
        lat_even -= 360
    if lat_odd >= 270:
        lat_odd -= 360
    if _nl(lat_even) != _nl(lat_odd):
        raise DecodeError("longitude zone mismatch between even and odd frames")

    use_even = pair.even.t >= pair.odd.t
    lat = lat_even if use_even else lat_odd
    if abs(lat) >= 87.0:
        raise DecodeError("polar-region position out of decode domain")
    nl = _nl(lat)
    m = math.floor(xe * (nl - 1) - xo * nl + 0.5)
    if use_even:
        n = max(nl, 1)
        lon = 360.0 / n * (m % n + xe)
        alt = pair.even.altitude_ft
    else:
        n = max(nl - 1, 1)
        lon = 360.0 / n * (m % n + xo)
        alt = pair.odd.altitude_ft
    if lon >= 180:
        lon -= 360
    return GeoPosition(lat, lon, (alt if alt is not None else 0) * 0.3048)


def encode_cpr(lat_deg: float, lon_deg: float, odd: bool) -> tuple[int, int]:
    """17-bit CPR encoding of a position (airborne format)."""
    i = 1 if odd else 0
    dlat = 360.0 / (4 * NZ - i)
    yz = math.floor(CPR_SCALE * (lat_deg % dlat) / dlat + 0.5)
    rlat = dlat * (yz / CPR_SCALE + math.floor(lat_deg / dlat))
    nl = max(_nl(rlat) - i, 1)
    dlon = 360.0 / nl
    xz = math.floor(CPR_SCALE * (lon_deg % dlon) / dlon + 0.5)
    return yz % CPR_SCALE, xz % CPR_SCALE


def decode_velocity(me: int) -> tuple[float | None, float | None]:
    """Ground speed (kt) and track (degrees clockwise from north) from a
    typecode-19 subtype 1/2 message. Unavailable components yield None."""
    tc = (me >> 51) & 0x1F
    if tc != 19:
        raise DecodeError(f"typecode {tc} is not a velocity message")
    subtype = (me >> 48) & 0x7
    if subtype not in (1, 2):
        return None, None  # airspeed subtypes: out of scope
    supersonic = 4 if subtype == 2 else 1
    s_ew = (me >> 42) & 1
    v_ew = (me >> 32) & 0x3FF
    s_ns = (me >> 31) & 1
    v_ns = (me >> 21) & 0x3FF
    if v_ew == 0 or v_ns == 0:
        return None, None  # zero means "not available" on the wire
    vx = (v_ew - 1) * supersonic * (-1 if s_ew else 1)
    vy = (v_ns - 1) * supersonic * (-1 if s_ns else 1)
    speed = math.hypot(vx, vy)
    track = math.degrees(math.atan2(vx, vy)) % 360.0
    return speed, track


def encode_velocity_field(vx_kt: float, vy_kt: float) -> int:
    """ME bits for a subtype-1 velocity message (simulator support)."""
    s_ew = 1 if vx_kt < 0 else 0
    s_ns = 1 if vy_kt < 0 else 0
    v_ew = min(int(round(abs(vx_kt))) + 1, 1023)
    v_ns = min(int(round(abs(vy_kt))) + 1, 1023)
    me = 19 << 51
    me |= 1 << 48  # subtype 1
    me |= s_ew << 42 | v_ew << 32 | s_ns << 31 | v_ns << 21
    return me


# --- frame construction (simulator support) ---------------------------------


def encode_frame(icao: int, me: int, df: int = 17, capability: int = 5) -> str:
    """Assemble a parity-correct 112-bit frame as 28 hex characters."""
    if not 0 <= icao < 1 << 24:
        raise ValidationError(f"icao must be 24-bit: {icao}")
    if not 0 <= me < 1 << 56:
        raise ValidationError("ME field must be 56-bit")
    prefix = (df << 3 | capability) << 104 | icao << 80 | me << 24
    parity = crc24(prefix.to_bytes(FRAME_BYTES, "big"))
    return f"{prefix | parity:028X}"


def encode_callsign(callsign: str) -> int:
    """48 bits of 6-bit charset symbols, left-aligned, space padded."""
    padded = callsign.upper().ljust(8)
    if len(padded) > 8:
        raise ValidationError(f"callsign too long: {callsign!r}")
    bits = 0
    for ch in padded:
        idx = _CALLSIGN_CHARSET.find(ch)
        if idx < 0:
            raise ValidationError(f"character {ch!r} not encodable in a callsign")
        bits = bits << 6 | idx
    return bits


def encode_ident_me(typecode: int, category: int, callsign: str) -> int:
    if not 1 <= typecode <= 4:
        raise ValidationError(f"identification typecode out of [1,4]: {typecode}")
    return typecode << 51 | (category & 0x7) << 48 | encode_callsign(callsign)


def encode_altitude(alt_ft: float) -> int:
    """12-bit Q=1 altitude field (25 ft resolution)."""
    n = max(int(round((alt_ft + 1000) / 25.0)), 0)
    n = min(n, (1 << 11) - 1)
    return ((n >> 4) << 5) | 0x10 | (n & 0xF)


def encode_position_me(
    lat_deg: float, lon_deg: float, alt_ft: float, odd: bool, typecode: int = 11
) -> int:
    if not 9 <= typecode <= 18:
        raise ValidationError(f"airborne position typecode out of [9,18]: {typecode}")
    lat_cpr, lon_cpr = encode_cpr(lat_deg, lon_deg, odd)
    me = typecode << 51
    me |= encode_altitude(alt_ft) << 36
    me |= (1 if odd else 0) << 34
    me |= lat_cpr << 17 | lon_cpr
    return me


# --- aircraft state and the dual current/history store ---------------------


@dataclass(frozen=True)
class AircraftState:
    """Latest decoded picture of one transponder-equipped aircraft."""

    icao: int
    last_seen: Timestamp
    callsign: str = ""
    category_class: TargetClass = TargetClass.NO_DATA
    position: GeoPosition | None = None
    altitude_ft: int | None = None
    ground_speed_kt: float | None = None
    track_deg: float | None = None

    def __post_init__(self):
        allowed = (
            TargetClass.AIRPLANE,
            TargetClass.DRONE,
            TargetClass.HELICOPTER,
            TargetClass.NO_DATA,
        )
        if self.category_class not in allowed:
            raise ValidationError(
                f"ADS-B category cannot be {self.category_class.value}"
            )
        if len(self.callsign) > 8:
            raise ValidationError(f"callsign too long: {self.callsign!r}")


@dataclass
class HistorySample:
    t: Timestamp
    position: GeoPosition
    altitude_ft: int | None


@dataclass
class TrackStore:
    """Current tracks plus a 1 Hz, 10-minute position history per aircraft."""

    current: dict[int, AircraftState] = field(default_factory=dict)
    history: dict[int, list[HistorySample]] = field(default_factory=dict)


def track_update(store: TrackStore, state: AircraftState, now: Timestamp) -> TrackStore:
    """Merge one aircraft update; newest non-empty fields win.

    History gains at most one sample per second per aircraft and survives
    eviction of the current track (the trail outlives the aircraft).
    """
    prev = store.current.get(state.icao)
    if prev is not None:
        state = AircraftState(
            icao=state.icao,
            last_seen=max(state.last_seen, prev.last_seen),
            callsign=state.callsign or prev.callsign,
            category_class=(
                state.category_class
                if state.category_class is not TargetClass.NO_DATA
                else prev.category_class
            ),
            position=state.position or prev.position,
            altitude_ft=state.altitude_ft if state.altitude_ft is not None else prev.altitude_ft,
            ground_speed_kt=(
                state.ground_speed_kt
                if state.ground_speed_kt is not None
                else prev.ground_speed_kt
            ),
            track_deg=state.track_deg if state.track_deg is not None else prev.track_deg,
        )
    store.current[state.icao] = state

    if state.position is not None:
        ring = store.history.setdefault(state.icao, [])
        if not ring or now - ring[-1].t >= HISTORY_PERIOD_MS:
            ring.append(HistorySample(now, state.position, state.altitude_ft))
            if len(ring) > HISTORY_CAPACITY:
                del ring[: len(ring) - HISTORY_CAPACITY]

    for icao in [i for i, s in store.current.items() if now - s.last_seen > STALE_AFTER_MS]:
        del store.current[icao]
    return store


class AdsbDecoder:
    """Stateful frame-stream decoder: CPR pairing plus the track store."""

    def __init__(self):
        self.store = TrackStore()
        self._cpr_even: dict[int, CprFrame] = {}
        self._cpr_odd: dict[int, CprFrame] = {}

    def feed(self, hex_frame: str, t: Timestamp) -> AircraftState | None:
        """Decode one frame and fold it into the store.

        Returns the refreshed aircraft state, or None if the frame was
        rejected or carried nothing the store tracks.
        """
        try:
            frame = parse_frame(hex_frame, t)
        except DecodeError:
            return None
        return self.feed_frame(frame)

    def feed_frame(self, frame: ModeSFrame) -> AircraftState | None:
        tc = frame.typecode
        state = AircraftState(icao=frame.icao, last_seen=frame.t)
        if 1 <= tc <= 4:
            category = frame.me >> 48 & 0x7
            state = replace(
                state,
                callsign=decode_callsign(frame.me),
                category_class=decode_category(tc, category),
            )
        elif 9 <= tc <= 18:
            cpr = parse_position_frame(frame.me, frame.t)
            buf = self._cpr_odd if cpr.odd else self._cpr_even
            buf[frame.icao] = cpr
            even = self._cpr_even.get(frame.icao)
            odd = self._cpr_odd.get(frame.icao)
            if even is not None and odd is not None:
                try:
                    pos = decode_position(CprFramePair(even, odd))
                except DecodeError:
                    pos = None
                if pos is not None:
                    state = replace(state, position=pos, altitude_ft=cpr.altitude_ft)
        elif tc == 19:
            speed, track = decode_velocity(frame.me)
            state = replace(state, ground_speed_kt=speed, track_deg=track)
        else:
            return None
        track_update(self.store, state, frame.t)
        return self.store.current.get(frame.icao)


def parse_hex_line(line: str, default_t: Timestamp = 0) -> tuple[str, Timestamp] | None:
    """Split one input line into (hex_frame, timestamp).

    Lines look like "8D4840D6..." or "@1500 8D4840D6...". Blank lines and
    comments return None.
    """
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    t = default_t
    if stripped.startswith("@"):
        head, _, rest = stripped.partition(" ")
        t = int(head[1:])
        stripped = rest.strip()
    return stripped, t


# --- NMEA 0183 --------------------------------------------------------------


@dataclass(frozen=True)
class NmeaFix:
    lat_deg: float
    lon_deg: float
    alt_m: float | None
    utc: str
    fix_quality: int | None
    speed_kt: float | None = None
    course_deg: float | None = None


class ChecksumError(DecodeError):
    """NMEA sentence checksum does not match its payload."""


def _nmea_coord(value: str, hemi: str) -> float:
    """ddmm.mmmm (or dddmm.mmmm) plus hemisphere letter to signed degrees."""
    if "." not in value:
        raise DecodeError(f"bad coordinate field: {value!r}")
    head = value.index(".") - 2
    degrees = float(value[:head]) + float(value[head:]) / 60.0
    return -degrees if hemi in ("S", "W") else degrees


def nmea_parse(line: str) -> NmeaFix | None:
    """Parse one GGA or RMC sentence; other types return None.

    The XOR checksum between '$' and '*' must match the trailing hex pair,
    otherwise ChecksumError is raised.
    """
    text = line.strip()
    if not text.startswith("$") or "*" not in text:
        raise DecodeError(f"not an NMEA sentence: {text!r}")
    body, _, tail = text[1:].partition("*")
    declared = int(tail[:2], 16)
    computed = 0
    for ch in body:
        computed ^= ord(ch)
    if computed != declared:
        raise ChecksumError(
            f"checksum mismatch: computed {computed:02X}, sentence says {declared:02X}"
        )
    fields = body.split(",")
    kind = fields[0][-3:]
    try:
        if kind == "GGA":
            return NmeaFix(
                lat_deg=_nmea_coord(fields[2], fields[3]),
                lon_deg=_nmea_coord(fields[4], fields[5]),
                alt_m=float(fields[9]) if fields[9] else None,
                utc=fields[1],
                fix_quality=int(fields[6]) if fields[6] else None,
            )
        if kind == "RMC":
            return NmeaFix(
                lat_deg=_nmea_coord(fields[3], fields[4]),
                lon_deg=_nmea_coord(fields[5], fields[6]),
                alt_m=None,
                utc=fields[1],
                fix_quality=None,
                speed_kt=float(fields[7]) if fields[7] else None,
                course_deg=float(fields[8]) if fields[8] else None,
            )
    except (IndexError, ValueError) as exc:
        raise DecodeError(f"malformed {kind} sentence: {text!r}") from exc
    return None  # unsupported sentence types are skipped silently
