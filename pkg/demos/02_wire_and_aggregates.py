"""The building blocks: frames on the wire, mergeable aggregates, formatting."""

import random

from melt.aggregates import fold_samples, merge, select_topk, body_to_text, body_from_text
from melt.humanize import humanize, parse_human
from melt.wire import Data, JobMapUpdate, decode_all, decode_frame, encode_message

print("--- a frame on the wire ---")
msg = JobMapUpdate(7, (("tait.1111", ("c1", "c2")),))
frame = encode_message(msg)
print(f"{msg} -> {len(frame)} bytes")
print(f"header: {frame[:8].hex(' ')}")
print(f"payload: {frame[8:]!r}")
decoded, rest = decode_frame(frame)
assert decoded == msg and rest == b""

print("\n--- concatenation safety ---")
msgs = [msg, Data(3, 20, 10, 5, 5, "kind=summary"), JobMapUpdate(8, ())]
blob = b"".join(encode_message(m) for m in msgs)
back, rest = decode_all(blob)
print(f"{len(blob)} bytes -> {len(back)} messages, {len(rest)} bytes left over")

print("\n--- aggregates merge like they folded flat ---")
rng = random.Random(7)
samples = [(f"job.{rng.randrange(4)}", "IO_RD_BW", rng.uniform(0, 1e9), 1.0)
           for _ in range(1000)]
flat = fold_samples(samples, "summary")
left = fold_samples(samples[:400], "summary")
right = fold_samples(samples[400:], "summary")
tree = merge(left, right)
cell = ("job.0", "IO_RD_BW")
print(f"flat fold  {cell}: count={flat.entries[cell].count:.0f} sum={flat.entries[cell].sum:.3f}")
print(f"tree merge {cell}: count={tree.entries[cell].count:.0f} sum={tree.entries[cell].sum:.3f}")

print("\n--- the full key set travels; truncation happens at the end ---")
for group, value in select_topk(tree, 3, "IO_RD_BW"):
    print(f"  {group:8s} {humanize(value, 'bytes_per_sec', 'human')}")

print("\n--- the text encoding inside Data records round-trips ---")
text = body_to_text(tree)
assert body_from_text(text).entries.keys() == tree.entries.keys()
print(text.splitlines()[0], "plus", len(text.splitlines()) - 1, "entry lines")

print("\n--- two formatting styles, one parser ---")
for value, unit in ((20 * 1024**2, "bytes_per_sec"), (794624, "bytes"),
                    (0.0639, "seconds"), (0, "bytes_per_sec")):
    compact = humanize(value, unit, "compact")
    human = humanize(value, unit, "human")
    print(f"  {value!r:>12} -> {compact:>8} | {human:>9} | parses back to "
          f"{parse_human(compact)!r}")
