// Browser app wiring: control bar, piano + waterfall canvas, keyboard and
// MIDI input, WebSocket wire client, WebAudio playback.
//
// Timing model: the engine runs on the audio clock (AudioContext.currentTime
// in ms). Each animation frame consumes engine events up to now + AHEAD_MS
// and schedules them at their exact dueMs on the audio clock, so chord
// onsets do not inherit requestAnimationFrame jitter.

import { ClientEngine, EmittedEvent } from "./engine.js";
import { KeyboardMap } from "./keyboard.js";
import { MidiInput } from "./midi.js";
import {
    DEFAULT_SETTINGS,
    JamResponse,
    Settings,
    chordLabel,
    decodeResponse,
    encodeRequest,
    isWireError,
    lookaheadFrames,
} from "./protocol.js";
import { Synth } from "./synth.js";
import { buildLanes } from "./waterfall.js";

const AHEAD_MS = 120; // audio scheduling horizon
const PIANO_LOW = 36;
const PIANO_HIGH = 96;

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
}

class App {
    private ctx = new AudioContext();
    private chordSynth = new Synth(this.ctx, "warm-pad");
    private melodySynth = new Synth(this.ctx, "soft-keys");
    private clickSynth = new Synth(this.ctx, "pluck");
    private engine: ClientEngine | null = null;
    private ws: WebSocket | null = null;
    private keyboard = new KeyboardMap();
    private midi = new MidiInput((pitch, isOn) => this.userNote(pitch, isOn));
    private heldKeys = new Set<string>();
    private userHeld = new Set<number>();
    private agentHeld: number[] = [];
    private lastJam: string | null = null;
    private canvas = el<HTMLCanvasElement>("stage");

    constructor() {
        this.wireControls();
        this.wireKeyboard();
        void this.wireMidi();
        requestAnimationFrame(() => this.frame());
    }

    private nowMs(): number {
        return this.ctx.currentTime * 1000;
    }

    private settingsFromControls(): Settings {
        return {
            bpm: Number(el<HTMLInputElement>("bpm").value),
            beatsPerMeasure: Number(el<HTMLInputElement>("beats-per-measure").value),
            silenceBeats: Number(el<HTMLInputElement>("silence").value),
            lookaheadBeats: Number(el<HTMLInputElement>("lookahead").value),
            commitBeats: Number(el<HTMLInputElement>("commit").value),
            temperature: Number(el<HTMLInputElement>("temperature").value),
            modelId: el<HTMLSelectElement>("model").value,
            metronomeOn: el<HTMLInputElement>("metronome").checked,
            showIncomingChords: el<HTMLInputElement>("show-chords").checked,
            seed: Number(el<HTMLInputElement>("seed").value) || 0,
        };
    }

    private wireControls(): void {
        el<HTMLButtonElement>("start-stop").addEventListener("click", () => {
            if (this.engine && this.engine.phase !== "stopped") this.stopSession();
            else void this.startSession();
        });
        el<HTMLButtonElement>("download").addEventListener("click", () => this.download());
        for (const id of ["silence", "lookahead", "commit", "temperature", "model",
                          "metronome", "show-chords", "seed", "beats-per-measure"]) {
            el(id).addEventListener("change", () => {
                if (!this.engine || this.engine.phase === "stopped") return;
                const s = this.settingsFromControls();
                this.engine.updateSettings({ ...s, bpm: this.engine.settings.bpm });
            });
        }
        el<HTMLSelectElement>("chord-instrument").addEventListener("change", () => {
            this.chordSynth.setInstrument(el<HTMLSelectElement>("chord-instrument").value);
        });
        el<HTMLSelectElement>("melody-instrument").addEventListener("change", () => {
            this.melodySynth.setInstrument(el<HTMLSelectElement>("melody-instrument").value);
        });
        el<HTMLSelectElement>("midi-port").addEventListener("change", () => {
            const v = el<HTMLSelectElement>("midi-port").value;
            this.midi.select(v === "" ? null : v);
        });
    }

    private wireKeyboard(): void {
        window.addEventListener("keydown", (ev) => {
            if (ev.repeat || (ev.target as HTMLElement)?.tagName === "INPUT") return;
            if (this.keyboard.handleControl(ev.key)) return;
            const pitch = this.keyboard.pitchFor(ev.key);
            if (pitch === null || this.heldKeys.has(ev.key)) return;
            this.heldKeys.add(ev.key);
            this.userNote(pitch, true);
        });
        window.addEventListener("keyup", (ev) => {
            const pitch = this.keyboard.pitchFor(ev.key);
            this.heldKeys.delete(ev.key);
            if (pitch !== null) this.userNote(pitch, false);
        });
    }

    private async wireMidi(): Promise<void> {
        this.midi.onWarning = (msg) => this.status(msg);
        const ports = await this.midi.connect();
        const select = el<HTMLSelectElement>("midi-port");
        for (const port of ports) {
            const opt = document.createElement("option");
            opt.value = port.id;
            opt.textContent = port.name;
            select.appendChild(opt);
        }
        if (ports.length) this.midi.select(ports[0].id);
    }

    private status(message: string): void {
        el("status").textContent = message;
    }

    private async startSession(): Promise<void> {
        await this.ctx.resume();
        const settings = this.settingsFromControls();
        this.engine = new ClientEngine(settings, `web-${Date.now().toString(36)}`);
        this.lastJam = null;
        el<HTMLInputElement>("bpm").disabled = true;
        el<HTMLButtonElement>("start-stop").textContent = "Stop Live Session";
        el<HTMLButtonElement>("download").disabled = true;
        const url = el<HTMLInputElement>("server-url").value;
        this.ws = new WebSocket(url);
        this.ws.onopen = () => this.status(`connected to ${url}; play a note to begin`);
        this.ws.onerror = () => this.status(`cannot reach ${url}; check jamserve --ws`);
        this.ws.onmessage = (ev) => {
            const out = decodeResponse(String(ev.data));
            if (isWireError(out)) {
                this.status(`server error ${out.code}: ${out.detail}`);
                return;
            }
            this.engine?.applyResponse(out as JamResponse, this.nowMs());
        };
    }

    private stopSession(): void {
        if (!this.engine) return;
        const events = this.engine.stop(this.nowMs());
        this.dispatch(events);
        this.chordSynth.allOff(this.ctx.currentTime);
        this.lastJam = this.engine.exportJam();
        this.ws?.close();
        this.ws = null;
        el<HTMLInputElement>("bpm").disabled = false;
        el<HTMLButtonElement>("start-stop").textContent = "Start Live Session";
        el<HTMLButtonElement>("download").disabled = false;
        this.status(`stopped after ${this.engine.played.length} frames, `
            + `${this.engine.underruns} underruns`);
    }

    private download(): void {
        if (!this.lastJam) return;
        const blob = new Blob([this.lastJam], { type: "text/plain" });
        const a = document.createElement("a");
        a.href = URL.createObjectURL(blob);
        a.download = `session-${new Date().toISOString().replace(/[:.]/g, "-")}.jam`;
        a.click();
        URL.revokeObjectURL(a.href);
    }

    private userNote(pitch: number, isOn: boolean): void {
        const now = this.nowMs();
        if (isOn) {
            this.userHeld.add(pitch);
            this.melodySynth.noteOn(pitch, this.ctx.currentTime);
        } else {
            this.userHeld.delete(pitch);
            this.melodySynth.noteOff(pitch, this.ctx.currentTime);
        }
        this.engine?.onUserNote(pitch, isOn, now);
    }

    private dispatch(events: EmittedEvent[]): void {
        for (const ev of events) {
            const when = Math.max(ev.dueMs / 1000, this.ctx.currentTime);
            if (ev.kind === "chord_on") {
                this.chordSynth.allOff(when);
                this.chordSynth.chordOn(ev.pitches, when);
                this.agentHeld = ev.pitches;
            } else if (ev.kind === "chord_off") {
                this.chordSynth.allOff(when);
                this.agentHeld = [];
            } else if (ev.kind === "metronome_tick") {
                this.clickSynth.tick(when, ev.pitches[0] === 88);
            }
        }
    }

    private frame(): void {
        const engine = this.engine;
        if (engine && engine.phase !== "stopped" && engine.phase !== "idle") {
            const now = this.nowMs();
            this.dispatch(engine.playDue(now + AHEAD_MS));
            const req = engine.maybeBuildRequest(now + AHEAD_MS);
            if (req && this.ws?.readyState === WebSocket.OPEN) {
                this.ws.send(encodeRequest(req));
            }
        }
        this.draw();
        requestAnimationFrame(() => this.frame());
    }

    // ------------------------------------------------------------------
    // Rendering
    // ------------------------------------------------------------------

    private draw(): void {
        const g = this.canvas.getContext("2d")!;
        const { width, height } = this.canvas;
        const pianoH = 110;
        const gridH = height - pianoH;
        g.fillStyle = "#14161c";
        g.fillRect(0, 0, width, height);
        this.drawGrid(g, width, gridH);
        this.drawPiano(g, width, gridH, pianoH);
    }

    private keyX(pitch: number, width: number): { x: number; w: number; black: boolean } {
        const whiteIndex = (p: number) => {
            const within = [0, 0, 1, 1, 2, 3, 3, 4, 4, 5, 5, 6][p % 12];
            return Math.floor(p / 12) * 7 + within;
        };
        const totalWhite = whiteIndex(PIANO_HIGH) - whiteIndex(PIANO_LOW) + 1;
        const ww = width / totalWhite;
        const black = [1, 3, 6, 8, 10].includes(pitch % 12);
        const x = (whiteIndex(pitch) - whiteIndex(PIANO_LOW)) * ww;
        return black ? { x: x + ww * 0.65, w: ww * 0.7, black } : { x, w: ww, black };
    }

    private drawPiano(g: CanvasRenderingContext2D, width: number, top: number, h: number): void {
        for (const pass of [false, true]) {
            for (let p = PIANO_LOW; p <= PIANO_HIGH; p++) {
                const { x, w, black } = this.keyX(p, width);
                if (black !== pass) continue;
                const held = this.userHeld.has(p);
                const agent = this.agentHeld.includes(p);
                g.fillStyle = black ? "#222" : "#f4f1ea";
                if (agent) g.fillStyle = "#3a7bd5";
                if (held) g.fillStyle = "#e8903a";
                g.fillRect(x, top, w - 1, black ? h * 0.62 : h);
                g.strokeStyle = "#0a0a0a";
                g.strokeRect(x, top, w - 1, black ? h * 0.62 : h);
            }
        }
    }

    private drawGrid(g: CanvasRenderingContext2D, width: number, gridH: number): void {
        const engine = this.engine;
        g.strokeStyle = "#272b36";
        for (let x = 0; x < width; x += width / 16) {
            g.beginPath();
            g.moveTo(x, 0);
            g.lineTo(x, gridH);
            g.stroke();
        }
        if (!engine || !engine.clock || engine.phase === "idle"
            || !engine.settings.showIncomingChords) return;
        const now = this.nowMs();
        const lanes = buildLanes(
            [...engine.pending.entries()].map(([frame, p]) => ({
                frame, token: p.token, pitches: p.pitches,
            })),
            now, engine.clock, lookaheadFrames(engine.settings),
            engine.committedHorizon, gridH, chordLabel,
        );
        for (const lane of lanes) {
            if (lane.token === "H" || lane.token === "NC") continue;
            g.globalAlpha = lane.opacity;
            g.fillStyle = "#3a7bd5";
            for (const p of lane.pitches) {
                const { x, w } = this.keyX(p, width);
                g.fillRect(x, lane.y - 14, w - 1, 14);
            }
            g.fillStyle = "#dfe7ff";
            g.font = "13px system-ui";
            g.fillText(lane.label, 8, Math.max(14, lane.y - 2));
            g.globalAlpha = 1;
        }
    }
}

declare global {
    interface Window {
        jamApp?: App;
    }
}

window.addEventListener("DOMContentLoaded", () => {
    window.jamApp = new App();
});
