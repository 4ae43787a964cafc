# Copyright 2026 The hkopt Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================
"""Line-protocol runner stand-in for the client tests.

Modes: ok, mismatch, garbage, crash-after=N, slow=SECONDS.
"""

import json
import os
import sys
import time


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "ok"
    served = 0
    for line in sys.stdin:
        req = json.loads(line)
        if mode.startswith("crash-after=") and served >= int(mode.split("=")[1]):
            os._exit(1)
        if mode.startswith("slow="):
            time.sleep(float(mode.split("=")[1]))
        if mode == "garbage":
            sys.stdout.write("not json\n")
            sys.stdout.flush()
            continue
        src = req["candidate_source"]
        ok = "syntax error" not in src
        resp = {
            "v": 1,
            "request_id": req["request_id"] + ("-x" if mode == "mismatch" else ""),
            "compile_ok": ok,
            "correct": ok and req["mode"] == "FULL",
            "runtime_ms": len(src) / 100.0 if ok else 0.0,
            "baseline_ms": 2.0,
            "max_abs_err": 0.0,
            "error_text": None if ok else "SyntaxError",
            "device": "fake:%d" % os.getpid(),
        }
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()
        served += 1


if __name__ == "__main__":
    main()
