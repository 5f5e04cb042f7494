import pytest
from hypothesis import given, strategies as st

from cornus.core import TxnId
from cornus.messages import Kind, Message
from cornus.trace import Trace, TraceFormatError

bodies = st.dictionaries(st.text(min_size=1, max_size=8),
                         st.one_of(st.integers(), st.text(max_size=8), st.booleans(),
                                   st.lists(st.integers(), max_size=4)), max_size=4)


@given(st.sampled_from(list(Kind)), st.integers(0, 99), st.integers(0, 10**9), st.integers(0, 99),
       st.integers(0, 99), bodies)
def test_message_round_trip(kind, node, seq, src, dst, body):
    m = Message(kind, TxnId(node, seq), src, dst, body)
    assert Message.decode(m.encode()) == m


def test_message_rejects_unknown_version():
    text = Message(Kind.VOTE_REQ, TxnId(0, 1), 0, 1).encode()
    with pytest.raises(ValueError):
        Message.decode("v0" + text[2:])


def test_trace_round_trip_is_byte_stable():
    t = Trace(header={"protocol": "cornus", "seed": 1})
    t.add(0, 0, "BEGIN", txn="t0.1", coordinator=0, participants=[1], decision_log=None, skip=False)
    t.add(5, None, "STORAGE_DOWN")
    text = t.dumps()
    back = Trace.loads(text)
    assert back.header == t.header and back.events == t.events
    assert back.dumps() == text and back.digest() == t.digest()


@pytest.mark.parametrize("line", ["0\t0\tBOGUS\t{}", "0\t0\tBEGIN", "x\t0\tBEGIN\t{}", "0\t0\tBEGIN\t{nope"])
def test_trace_rejects_malformed_lines(line):
    with pytest.raises(TraceFormatError):
        Trace.loads(line)
