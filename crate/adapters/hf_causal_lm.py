#!/usr/bin/env python3
"""Serve a Hugging Face causal LM over the steerlab `model/1` protocol.

Usage: hf_causal_lm.py MODEL_NAME_OR_PATH [--device cpu|cuda] [--dtype float32|bfloat16]

Then point steerlab at it with `--model "adapter:python3 adapters/hf_causal_lm.py <model>"`.
Layer `l` is the residual stream after decoder block `l` (hidden_states[l + 1]).
"""

import argparse
import json
import math
import sys

import torch
from transformers import AutoModelForCausalLM, AutoTokenizer


def conventional_layer(model_id, num_layers):
    low = model_id.lower()
    for tag, layer in (("8b", 24), ("3b", 16), ("1b", 8)):
        if tag in low and layer < num_layers:
            return layer
    return num_layers // 2


def covers(policy, position, prompt_len):
    return policy == "all-positions" or position + 1 >= prompt_len


class Server:
    def __init__(self, name, device, dtype):
        self.device = device
        self.tok = AutoTokenizer.from_pretrained(name)
        self.model = AutoModelForCausalLM.from_pretrained(name, dtype=getattr(torch, dtype)).to(device)
        self.model.eval()
        cfg = self.model.config
        self.layers = self.model.model.layers
        self.descriptor = {
            "model_id": name,
            "num_layers": cfg.num_hidden_layers,
            "hidden_dim": cfg.hidden_size,
            "vocab_size": cfg.vocab_size,
            "default_steering_layer": conventional_layer(name, cfg.num_hidden_layers),
            "max_context": getattr(cfg, "max_position_embeddings", 4096),
        }
        # Set per call: absolute position of the first token in the current chunk.
        self.offset = 0
        self.prompt_len = 0
        self.active = []
        self.captured = None
        self.capture_layer = None
        for i, layer in enumerate(self.layers):
            layer.register_forward_hook(self._hook(i))

    def _hook(self, index):
        def hook(_module, _inputs, output):
            hidden = output[0] if isinstance(output, tuple) else output
            for h in self.active:
                if h["layer"] != index:
                    continue
                add = torch.tensor(h["additive"], dtype=hidden.dtype, device=hidden.device)
                for j in range(hidden.shape[1]):
                    if covers(h["policy"], self.offset + j, self.prompt_len):
                        hidden[:, j, :] += add
            if self.capture_layer == index:
                self.captured = hidden[0].double().cpu().tolist()
            return output

        return hook

    def _run(self, ids, past, interventions, prompt_len, offset, capture_layer=None):
        self.active, self.prompt_len, self.offset, self.capture_layer = interventions, prompt_len, offset, capture_layer
        self.captured = None
        inp = torch.tensor([ids], device=self.device)
        with torch.no_grad():
            out = self.model(input_ids=inp, past_key_values=past, use_cache=True)
        return out.logits[0].double(), out.past_key_values

    def describe(self, _req):
        return {"descriptor": self.descriptor, "eos": self.tok.eos_token_id}

    def tokenize(self, req):
        return {"tokens": self.tok(req["text"], add_special_tokens=True)["input_ids"]}

    def detokenize(self, req):
        return {"text": self.tok.decode(req["tokens"], skip_special_tokens=True)}

    def forward(self, req):
        logits, _ = self._run(req["tokens"], None, req["interventions"], req["prompt_len"], 0, req.get("capture_layer"))
        return {"logits": logits.cpu().tolist(), "capture": self.captured}

    def generate(self, req):
        cfg, prompt = req["config"], req["prompt"]
        decode = cfg["decode"]
        gen = torch.Generator().manual_seed(decode.get("seed", 0)) if decode["mode"] == "seeded-sampling" else None
        logits, past = self._run(prompt, None, req["interventions"], len(prompt), 0)
        last = logits[-1]
        tokens, logprobs, stopped = [], [], False
        eos = self.tok.eos_token_id
        for step in range(cfg["max_new_tokens"]):
            lp = torch.log_softmax(last, dim=-1)
            if gen is None:
                t = int(torch.argmax(last))
            else:
                probs = torch.softmax(last / decode["temperature"], dim=-1).cpu()
                t = int(torch.multinomial(probs, 1, generator=gen))
            tokens.append(t)
            logprobs.append(float(lp[t]))
            if cfg.get("stop_at_eos", True) and t == eos:
                stopped = True
                break
            logits, past = self._run([t], past, req["interventions"], len(prompt), len(prompt) + step)
            last = logits[-1]
        text_tokens = tokens[:-1] if stopped else tokens
        return {
            "generation": {
                "tokens": tokens,
                "text": self.tok.decode(text_tokens, skip_special_tokens=True),
                "logprobs": [lp if math.isfinite(lp) else -1e30 for lp in logprobs],
                "stopped_at_eos": stopped,
            }
        }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("model")
    ap.add_argument("--device", default="cuda" if torch.cuda.is_available() else "cpu")
    ap.add_argument("--dtype", default="float32")
    args = ap.parse_args()
    server = Server(args.model, args.device, args.dtype)
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            resp = {"ok": True, **getattr(server, req["op"])(req)}
        except Exception as e:  # reported to the client, which decides what to do
            resp = {"ok": False, "error": f"{type(e).__name__}: {e}"}
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
