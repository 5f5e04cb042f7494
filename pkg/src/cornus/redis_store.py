"""Redis-backed log storage.

Each slot is a single integer under ``state-<participant>-<txn>`` (1 VOTE_YES,
2 ABORT, 3 COMMIT, absent NONE); user data lives under
``data-<participant>-<txn>``. LogOnce is one server-side script: optional
data write, SETNX of the state key, read-back. Granting each node read-write
access to ``data-<self>-*`` and ``state-*`` (``ACL SETUSER``) is a deployment
step and not enforced here.
"""
from __future__ import annotations

import os
from typing import Optional

from .core import LogState, RecordType, TxnId
from .storage import IllegalTransition, StorageUnavailable

LOG_ONCE_SCRIPT = """
if ARGV[2] ~= nil and ARGV[2] ~= '' then
  redis.call('set', KEYS[1], ARGV[2])
end
redis.call('setnx', KEYS[2], ARGV[1])
local state = tonumber(redis.call('get', KEYS[2]))
return {state}
"""

# Plain Log: decisions overwrite the vote, except where that would flip an
# outcome. A VOTE_YES never overwrites anything and is refused over ABORT.
LOG_SCRIPT = """
if ARGV[2] ~= nil and ARGV[2] ~= '' then
  redis.call('set', KEYS[1], ARGV[2])
end
local cur = tonumber(redis.call('get', KEYS[2]) or '0')
local rec = tonumber(ARGV[1])
if rec == 1 then
  if cur == 2 then return {-2} end
  if cur == 0 then redis.call('set', KEYS[2], 1) end
  return {cur}
end
if cur ~= 0 and cur ~= 1 and cur ~= rec then
  return {-cur}
end
redis.call('set', KEYS[2], rec)
return {cur}
"""

ENDPOINT_ENV = "CORNUS_REDIS_URL"


def state_key(log: str, txn: TxnId) -> str:
    return f"state-{log}-{txn}"


def data_key(log: str, txn: TxnId) -> str:
    return f"data-{log}-{txn}"


class RedisLogStore:
    def __init__(self, client):
        import redis

        self._redis_errors = (redis.ConnectionError, redis.TimeoutError)
        self.client = client
        self._log_once = client.register_script(LOG_ONCE_SCRIPT)
        self._log = client.register_script(LOG_SCRIPT)

    @classmethod
    def from_url(cls, url: Optional[str] = None, timeout_ms: int = 1000) -> "RedisLogStore":
        import redis

        url = url or os.environ.get(ENDPOINT_ENV, "redis://localhost:6379/0")
        t = timeout_ms / 1000
        return cls(redis.Redis.from_url(url, socket_timeout=t, socket_connect_timeout=t))

    def _call(self, script, log, txn, rec, data):
        keys = [data_key(log, txn), state_key(log, txn)]
        args = [int(rec), data if data is not None else b""]
        try:
            reply = script(keys=keys, args=args)
        except self._redis_errors as exc:
            raise StorageUnavailable(str(exc)) from exc
        return int(reply[0])

    def log_once(self, log, txn, rec, *, data=None, writer=None) -> LogState:
        if rec not in (RecordType.VOTE_YES, RecordType.ABORT):
            raise ValueError("LogOnce only records votes")
        return LogState(self._call(self._log_once, log, txn, rec, data))

    def log(self, log, txn, rec, *, data=None, writer=None) -> None:
        prev = self._call(self._log, log, txn, rec, data)
        if prev < 0:
            raise IllegalTransition(f"{rec.name} over {LogState(-prev).name}")

    def read_state(self, log, txn) -> LogState:
        try:
            raw = self.client.get(state_key(log, txn))
        except self._redis_errors as exc:
            raise StorageUnavailable(str(exc)) from exc
        return LogState(int(raw)) if raw is not None else LogState.NONE
