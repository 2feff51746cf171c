"""Bencode codec, .torrent metadata parsing and magnet URI parsing.

Values map to plain Python types: int, bytes, list and dict (bytes keys).
The decoder is strict by default (canonical form only) so that
encode(decode(b)) == b; a lenient flag accepts real-world torrents whose
dictionary keys are not sorted.  The infohash is always computed over the
original byte span of the ``info`` value, never a re-encoding.
"""

import base64
import hashlib
import urllib.parse
from dataclasses import dataclass

DEFAULT_PIECE_LENGTH = 512 * 1024

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class BencodeError(ValueError):
    pass


class MalformedInput(BencodeError):
    pass


class TrailingBytes(BencodeError):
    pass


class DuplicateKey(BencodeError):
    pass


class TorrentError(ValueError):
    pass


class MissingInfoDict(TorrentError):
    pass


class MissingRequiredField(TorrentError):
    pass


class BadPieceHashBlock(TorrentError):
    pass


class MagnetError(ValueError):
    pass


class BadScheme(MagnetError):
    pass


class BadInfohashLength(MagnetError):
    pass


class BadInfohashEncoding(MagnetError):
    pass


# ---------------------------------------------------------------------------
# codec

class _Decoder:
    def __init__(self, data: bytes, strict: bool):
        self.data = data
        self.i = 0
        self.strict = strict

    def error(self, msg: str) -> MalformedInput:
        return MalformedInput(f"{msg} at offset {self.i}")

    def peek(self) -> int:
        if self.i >= len(self.data):
            raise self.error("unexpected end of input")
        return self.data[self.i]

    def decode_value(self):
        c = self.peek()
        if c == ord(b"i"):
            return self.decode_int()
        if c == ord(b"l"):
            return self.decode_list()
        if c == ord(b"d"):
            return self.decode_dict()
        if ord(b"0") <= c <= ord(b"9"):
            return self.decode_bytes()
        raise self.error(f"invalid type prefix {bytes([c])!r}")

    def decode_int(self) -> int:
        self.i += 1  # 'i'
        end = self.data.find(b"e", self.i)
        if end < 0:
            raise self.error("unterminated integer")
        digits = self.data[self.i : end]
        body = digits[1:] if digits[:1] == b"-" else digits
        if not body or not body.isdigit():
            raise self.error(f"invalid integer {digits!r}")
        if body[:1] == b"0" and digits not in (b"0",):
            raise self.error(f"non-canonical integer {digits!r}")
        value = int(digits)
        if not INT64_MIN <= value <= INT64_MAX:
            raise self.error("integer exceeds 64-bit range")
        self.i = end + 1
        return value

    def decode_bytes(self) -> bytes:
        colon = self.data.find(b":", self.i)
        if colon < 0:
            raise self.error("unterminated string length")
        digits = self.data[self.i : colon]
        if not digits.isdigit():
            raise self.error(f"invalid string length {digits!r}")
        if digits[:1] == b"0" and digits != b"0":
            raise self.error(f"non-canonical string length {digits!r}")
        length = int(digits)
        start = colon + 1
        if start + length > len(self.data):
            raise self.error("string length overruns input")
        self.i = start + length
        return self.data[start : start + length]

    def decode_list(self) -> list:
        self.i += 1  # 'l'
        out = []
        while self.peek() != ord(b"e"):
            out.append(self.decode_value())
        self.i += 1
        return out

    def decode_dict(self) -> dict:
        self.i += 1  # 'd'
        out = {}
        prev_key = None
        while self.peek() != ord(b"e"):
            if not (ord(b"0") <= self.peek() <= ord(b"9")):
                raise self.error("dictionary key is not a string")
            key = self.decode_bytes()
            if key in out:
                raise self.error(f"duplicate dictionary key {key!r}")
            if self.strict and prev_key is not None and key <= prev_key:
                raise self.error(f"dictionary keys not in ascending order ({key!r})")
            out[key] = self.decode_value()
            prev_key = key
        self.i += 1
        return out


def decode(data: bytes, *, strict: bool = True):
    """Decode one complete bencoded value; trailing bytes are an error."""
    if not data:
        raise MalformedInput("empty input")
    dec = _Decoder(bytes(data), strict)
    value = dec.decode_value()
    if dec.i != len(dec.data):
        raise TrailingBytes(f"{len(dec.data) - dec.i} trailing bytes after value")
    return value


def _encode_into(value, out: list) -> None:
    if isinstance(value, bool):
        raise TypeError("bool is not a bencode type")
    if isinstance(value, int):
        if not INT64_MIN <= value <= INT64_MAX:
            raise ValueError("integer exceeds 64-bit range")
        out.append(b"i%de" % value)
    elif isinstance(value, (bytes, bytearray, memoryview)):
        raw = bytes(value)
        out.append(b"%d:" % len(raw))
        out.append(raw)
    elif isinstance(value, str):
        _encode_into(value.encode("utf-8"), out)
    elif isinstance(value, (list, tuple)):
        out.append(b"l")
        for item in value:
            _encode_into(item, out)
        out.append(b"e")
    elif isinstance(value, dict):
        items = []
        for k, v in value.items():
            if isinstance(k, str):
                k = k.encode("utf-8")
            elif not isinstance(k, (bytes, bytearray)):
                raise TypeError(f"dictionary key must be bytes or str, got {type(k).__name__}")
            items.append((bytes(k), v))
        items.sort(key=lambda kv: kv[0])
        for (a, _), (b, _) in zip(items, items[1:]):
            if a == b:
                raise DuplicateKey(f"duplicate dictionary key {a!r}")
        out.append(b"d")
        for k, v in items:
            _encode_into(k, out)
            _encode_into(v, out)
        out.append(b"e")
    else:
        raise TypeError(f"cannot bencode {type(value).__name__}")


def encode(value) -> bytes:
    """Canonical bencoding: dict keys emitted in ascending raw-byte order."""
    out: list = []
    _encode_into(value, out)
    return b"".join(out)


# ---------------------------------------------------------------------------
# torrent metadata

@dataclass(frozen=True)
class TorrentMeta:
    infohash: bytes
    name: bytes
    total_size: int
    piece_length: int = DEFAULT_PIECE_LENGTH
    piece_hashes: tuple = ()
    announce_urls: tuple = ()

    def __post_init__(self):
        if len(self.infohash) != 20:
            raise TorrentError("infohash must be exactly 20 bytes")
        if self.piece_length <= 0:
            raise TorrentError("piece length must be positive")
        if self.total_size < 0:
            raise TorrentError("total size cannot be negative")
        if self.piece_hashes:
            expected = -(-self.total_size // self.piece_length)  # ceil
            if len(self.piece_hashes) != expected:
                raise BadPieceHashBlock(
                    f"expected {expected} piece hashes for "
                    f"{self.total_size} bytes, got {len(self.piece_hashes)}"
                )

    @property
    def infohash_hex(self) -> str:
        return self.infohash.hex()

    @property
    def display_name(self) -> str:
        return self.name.decode("utf-8", errors="replace")


def _skip_value(data: bytes, i: int) -> int:
    """Return the end offset of the bencoded value starting at ``i``."""
    c = data[i : i + 1]
    if c == b"i":
        end = data.find(b"e", i)
        if end < 0:
            raise MalformedInput("unterminated integer")
        return end + 1
    if c in (b"l", b"d"):
        i += 1
        while data[i : i + 1] != b"e":
            if not data[i : i + 1]:
                raise MalformedInput("unterminated container")
            i = _skip_value(data, i)
        return i + 1
    if c.isdigit():
        colon = data.find(b":", i)
        if colon < 0:
            raise MalformedInput("unterminated string")
        return colon + 1 + int(data[i:colon])
    raise MalformedInput(f"invalid type prefix {c!r}")


def _info_span(data: bytes) -> tuple:
    """Byte span of the top-level ``info`` value in a torrent file."""
    if data[:1] != b"d":
        raise MissingInfoDict("torrent does not start with a dictionary")
    i = 1
    while data[i : i + 1] != b"e":
        colon = data.find(b":", i)
        if colon < 0 or not data[i:colon].isdigit():
            raise MalformedInput("bad dictionary key")
        key_end = colon + 1 + int(data[i:colon])
        key = data[colon + 1 : key_end]
        value_end = _skip_value(data, key_end)
        if key == b"info":
            return key_end, value_end
        i = value_end
    raise MissingInfoDict("no info dictionary present")


def parse_torrent(data: bytes, *, strict: bool = False) -> TorrentMeta:
    """Parse a .torrent file.  Lenient about key order by default since
    real-world torrents vary; the infohash is the SHA-1 of the original
    info byte span either way."""
    data = bytes(data)
    top = decode(data, strict=strict)
    if not isinstance(top, dict):
        raise MissingInfoDict("torrent does not decode to a dictionary")
    info = top.get(b"info")
    if not isinstance(info, dict):
        raise MissingInfoDict("no info dictionary present")

    start, end = _info_span(data)
    infohash = hashlib.sha1(data[start:end]).digest()

    name = info.get(b"name")
    if not isinstance(name, bytes):
        raise MissingRequiredField("name")
    piece_length = info.get(b"piece length")
    if not isinstance(piece_length, int):
        raise MissingRequiredField("piece length")

    if b"files" in info:
        try:
            total_size = sum(f[b"length"] for f in info[b"files"])
        except (TypeError, KeyError):
            raise MissingRequiredField("length") from None
    elif isinstance(info.get(b"length"), int):
        total_size = info[b"length"]
    else:
        raise MissingRequiredField("length")

    pieces = info.get(b"pieces", b"")
    if not isinstance(pieces, bytes) or len(pieces) % 20:
        raise BadPieceHashBlock(f"piece hash block of {len(pieces)} bytes")
    piece_hashes = tuple(pieces[k : k + 20] for k in range(0, len(pieces), 20))

    urls = []
    announce = top.get(b"announce")
    if isinstance(announce, bytes):
        urls.append(announce)
    for tier in top.get(b"announce-list", []):
        if isinstance(tier, list):
            urls.extend(u for u in tier if isinstance(u, bytes))
    seen = set()
    announce_urls = []
    for u in urls:
        text = u.decode("utf-8", errors="replace")
        if text not in seen:
            seen.add(text)
            announce_urls.append(text)

    return TorrentMeta(
        infohash=infohash,
        name=name,
        total_size=total_size,
        piece_length=piece_length,
        piece_hashes=piece_hashes,
        announce_urls=tuple(announce_urls),
    )


def parse_magnet(uri: str) -> TorrentMeta:
    """Parse a magnet URI; only ``xt=urn:btih:`` is required."""
    split = urllib.parse.urlsplit(uri)
    if split.scheme.lower() != "magnet":
        raise BadScheme(f"not a magnet URI: {uri[:32]!r}")
    params = urllib.parse.parse_qsl(split.query, keep_blank_values=True)

    infohash = None
    name = b""
    trackers = []
    for key, value in params:
        if key == "xt" and infohash is None:
            if not value.lower().startswith("urn:btih:"):
                continue
            digest = value[len("urn:btih:"):]
            if len(digest) == 40:
                try:
                    infohash = bytes.fromhex(digest)
                except ValueError:
                    raise BadInfohashEncoding(f"bad hex infohash {digest!r}") from None
            elif len(digest) == 32:
                try:
                    infohash = base64.b32decode(digest.upper())
                except Exception:
                    raise BadInfohashEncoding(f"bad base32 infohash {digest!r}") from None
            else:
                raise BadInfohashLength(f"infohash of {len(digest)} characters")
        elif key == "dn" and not name:
            name = value.encode("utf-8")
        elif key == "tr":
            trackers.append(value)

    if infohash is None:
        raise BadInfohashEncoding("no xt=urn:btih: parameter")
    return TorrentMeta(
        infohash=infohash,
        name=name,
        total_size=0,
        announce_urls=tuple(trackers),
    )
