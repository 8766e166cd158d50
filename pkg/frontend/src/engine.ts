// Client session engine: mirrors the reference scheduling contract so the
// browser behaves exactly like the headless client.
//
//  * one request per frame, targets strictly increasing, several may be in
//    flight; stale responses (target not beyond the last applied) dropped
//  * cancel-and-replace: a response replaces every scheduled chord after
//    the current frame, except frames inside the sliding commit horizon
//    (frameAt(now) + 1 + commitFrames), which are frozen on first fill
//  * HOLD tokens are resolved against their own response so a chord whose
//    onset fell in the silence period still starts at its first playable
//    frame
//  * warm-start chords are substituted into request histories but never
//    scheduled or played
//  * underrun: a live frame with no plan sustains the current sound and
//    increments a counter

import { FrameClock } from "./timing.js";
import {
    JamRequest,
    JamResponse,
    Settings,
    WarmStart,
    commitFrames,
    formatFloat,
    isChordSymbol,
    lookaheadFrames,
    silenceFrames,
    voiceChord,
} from "./protocol.js";

export type Phase = "idle" | "silence" | "live" | "stopped";

export interface NoteEvent {
    pitch: number;
    onMs: number;
    offMs: number | null;
}

export interface EmittedEvent {
    kind: "chord_on" | "chord_off" | "note_echo" | "metronome_tick";
    pitches: number[];
    frame: number;
    dueMs: number;
}

interface Pending {
    token: string;
    sounding: string | null; // chord symbol the frame should ring, "NC", or null
    pitches: number[];
}

interface RequestLog {
    target: number;
    sentMs: number;
    commitFrames: number;
    recvMs: number;
    genMs: number;
}

export const METRONOME_TICK_PITCH = 76;
export const METRONOME_ACCENT_PITCH = 88;

export function monophonize(events: NoteEvent[], clock: FrameClock, upto: number): string[] {
    // First onset in a frame wins and the rest are dropped; the winner
    // holds while it keeps sounding; a new onset truncates it.
    const out: string[] = new Array(upto).fill("R");
    let active = -1; // frame the current winner holds through
    let i = 0;
    const byFrame = events.map((ev) => ({
        on: clock.frameAt(ev.onMs),
        through: ev.offMs === null
            ? Number.MAX_SAFE_INTEGER
            : (() => {
                const g = clock.frameAt(ev.offMs);
                return ev.offMs > clock.timeOfFrame(g) ? g : g - 1;
            })(),
        pitch: ev.pitch,
    }));
    for (let f = 0; f < upto; f++) {
        let selected = -1;
        while (i < byFrame.length && byFrame[i].on === f) {
            if (selected < 0) selected = i;
            i += 1;
        }
        if (selected >= 0) {
            out[f] = `N${byFrame[selected].pitch}`;
            active = byFrame[selected].through;
        } else if (f <= active) {
            out[f] = "H";
        }
    }
    return out;
}

export class ClientEngine {
    phase: Phase = "idle";
    clock: FrameClock | null = null;
    settings: Settings;
    readonly sessionId: string;

    readonly events: NoteEvent[] = [];
    private openNotes = new Map<number, number>();

    played: string[] = [];
    pending = new Map<number, Pending>();
    committedValue = new Map<number, string>();
    committedHorizon = 0;
    warm: WarmStart | null = null;

    underruns = 0;
    underrunFrames: number[] = [];
    commitViolations = 0;
    requestLog: RequestLog[] = [];
    log: string[] = [];

    private lastBuiltTarget = 0;
    private lastAppliedTarget = -1;
    private nextFrame = 0;
    private sounding: string | null = null;
    private outbox: EmittedEvent[] = [];
    private totalFrames = 0;
    private epochs: Array<{ fromFrame: number; settings: Settings }> = [];

    constructor(settings: Settings, sessionId = "web") {
        this.settings = { ...settings };
        this.sessionId = sessionId;
    }

    onUserNote(pitch: number, isOn: boolean, nowMs: number): void {
        if (this.phase === "stopped") return;
        if (this.phase === "idle") {
            if (!isOn) return;
            this.clock = new FrameClock(this.settings.bpm, nowMs);
            this.phase = silenceFrames(this.settings) > 0 ? "silence" : "live";
            this.epochs.push({ fromFrame: 0, settings: { ...this.settings } });
        }
        if (isOn) {
            if (this.openNotes.has(pitch)) this.closeNote(pitch, nowMs);
            this.openNotes.set(pitch, this.events.length);
            this.events.push({ pitch, onMs: nowMs, offMs: null });
            this.outbox.push({
                kind: "note_echo", pitches: [pitch],
                frame: this.clock!.frameAt(nowMs), dueMs: nowMs,
            });
        } else {
            if (!this.openNotes.has(pitch)) return;
            this.closeNote(pitch, nowMs);
        }
    }

    private closeNote(pitch: number, nowMs: number): void {
        const idx = this.openNotes.get(pitch)!;
        this.openNotes.delete(pitch);
        const ev = this.events[idx];
        this.events[idx] = { ...ev, offMs: nowMs > ev.onMs ? nowMs : ev.onMs + 1e-3 };
    }

    updateSettings(changes: Partial<Settings>): void {
        if (this.phase !== "idle" && changes.bpm !== undefined
            && changes.bpm !== this.settings.bpm) {
            throw new Error("bpm cannot change once a session has started");
        }
        this.settings = { ...this.settings, ...changes };
        if (this.phase === "silence" || this.phase === "live") {
            this.epochs.push({ fromFrame: this.nextFrame, settings: { ...this.settings } });
        }
    }

    maybeBuildRequest(nowMs: number): JamRequest | null {
        if (this.phase !== "silence" && this.phase !== "live") return null;
        const target = this.clock!.frameAt(nowMs) + 1;
        if (target <= this.lastBuiltTarget) return null;
        if (this.nextFrame < target) {
            throw new Error(`playDue must reach frame ${target - 1} before requesting ${target}`);
        }
        this.freezeWindow(target - 1);

        const melody = monophonize(this.events, this.clock!, target);
        const chords = this.played.slice(0, target);
        if (this.warm) {
            const { startFrame, chords: warmChords } = this.warm;
            for (let f = startFrame; f < Math.min(startFrame + warmChords.length, target); f++) {
                if (chords[f] === "NC") chords[f] = warmChords[f - startFrame];
            }
        }
        const committed: Array<[number, string]> = [];
        for (let f = target; f < target + commitFrames(this.settings); f++) {
            const entry = this.pending.get(f);
            if (!entry) break;
            committed.push([f, entry.token]);
        }
        this.requestLog.push({
            target, sentMs: nowMs, commitFrames: commitFrames(this.settings),
            recvMs: -1, genMs: -1,
        });
        this.lastBuiltTarget = target;
        return {
            sessionId: this.sessionId,
            targetFrame: target,
            settings: { ...this.settings },
            melody,
            chords,
            committed,
        };
    }

    applyResponse(resp: JamResponse, nowMs: number): boolean {
        if (this.phase !== "silence" && this.phase !== "live") return false;
        if (resp.targetFrame <= this.lastAppliedTarget) {
            this.log.push(`stale response for target ${resp.targetFrame} discarded`);
            return false;
        }
        const entry = this.requestLog.find((r) => r.target === resp.targetFrame);
        if (entry) {
            entry.recvMs = nowMs;
            entry.genMs = resp.genMs;
        }
        const cur = this.clock!.frameAt(nowMs);
        this.freezeWindow(cur);

        for (const f of [...this.pending.keys()]) {
            if (f > cur && !this.committedValue.has(f)) this.pending.delete(f);
        }
        let carry: string | null = null;
        for (let i = 0; i < resp.chords.length; i++) {
            const f = resp.targetFrame + i;
            const token = resp.chords[i];
            if (token !== "H") carry = token;
            if (f <= cur || f < silenceFrames(this.settings)) continue;
            if (this.committedValue.has(f)) {
                if (this.committedValue.get(f) !== token) {
                    this.log.push(`response disagrees with committed chord at frame ${f}`);
                }
                continue;
            }
            const sounding = token === "H" ? carry : token;
            let pitches: number[] = [];
            if (sounding !== null && sounding !== "NC") {
                pitches = token === "H" ? voiceChord(sounding) : (resp.voicings[i] ?? voiceChord(token));
            }
            this.pending.set(f, { token, sounding, pitches });
        }

        if (resp.warmStart) {
            if (this.warm === null) this.warm = resp.warmStart;
            else this.log.push(`duplicate warm start (target ${resp.targetFrame}) ignored`);
        }
        this.freezeWindow(cur);
        this.lastAppliedTarget = resp.targetFrame;
        return true;
    }

    private freezeWindow(cur: number): void {
        const horizon = cur + 1 + commitFrames(this.settings);
        if (horizon > this.committedHorizon) this.committedHorizon = horizon;
        for (let f = cur + 1; f < horizon; f++) {
            const entry = this.pending.get(f);
            if (entry && !this.committedValue.has(f)) {
                this.committedValue.set(f, entry.token);
            }
        }
    }

    playDue(nowMs: number): EmittedEvent[] {
        const out = this.outbox;
        this.outbox = [];
        if (this.phase !== "silence" && this.phase !== "live") return out;
        const cur = this.clock!.frameAt(nowMs);
        while (this.nextFrame <= cur) {
            this.consumeFrame(this.nextFrame, out);
            this.nextFrame += 1;
        }
        return out;
    }

    private consumeFrame(f: number, out: EmittedEvent[]): void {
        const due = this.clock!.timeOfFrame(f);
        const silence = silenceFrames(this.settings);
        if (this.phase === "silence" && f >= silence) this.phase = "live";
        this.freezeWindow(f);

        if (this.settings.metronomeOn && f % 4 === 0) {
            const accent = f % (4 * this.settings.beatsPerMeasure) === 0;
            out.push({
                kind: "metronome_tick",
                pitches: [accent ? METRONOME_ACCENT_PITCH : METRONOME_TICK_PITCH],
                frame: f, dueMs: due,
            });
        }

        const entry = this.pending.get(f);
        this.pending.delete(f);
        let played: string;
        if (!entry) {
            if (f < silence) {
                played = "NC";
            } else {
                this.underruns += 1;
                this.underrunFrames.push(f);
                played = f > 0 ? "H" : "NC";
            }
        } else {
            const { token, sounding, pitches } = entry;
            if (isChordSymbol(token)) {
                if (this.sounding !== null) out.push({ kind: "chord_off", pitches: [], frame: f, dueMs: due });
                out.push({ kind: "chord_on", pitches, frame: f, dueMs: due });
                this.sounding = token;
            } else if (sounding === null || sounding === this.sounding) {
                // hold of whatever is (or is not) ringing
            } else if (sounding === "NC") {
                if (this.sounding !== null) out.push({ kind: "chord_off", pitches: [], frame: f, dueMs: due });
                this.sounding = null;
            } else {
                if (this.sounding !== null) out.push({ kind: "chord_off", pitches: [], frame: f, dueMs: due });
                out.push({ kind: "chord_on", pitches, frame: f, dueMs: due });
                this.sounding = sounding;
            }
            played = token;
        }

        const expected = this.committedValue.get(f);
        this.committedValue.delete(f);
        if (expected !== undefined && expected !== played) this.commitViolations += 1;
        this.played.push(played);
    }

    stop(nowMs: number): EmittedEvent[] {
        if (this.phase !== "silence" && this.phase !== "live") return [];
        const out = this.playDue(nowMs);
        const n = this.clock!.frameAt(nowMs);
        if (this.sounding !== null) {
            out.push({ kind: "chord_off", pitches: [], frame: n, dueMs: nowMs });
            this.sounding = null;
        }
        this.totalFrames = n;
        this.played.length = Math.min(this.played.length, n);
        this.phase = "stopped";
        return out;
    }

    // .jam session record, identical format to the headless client's export.
    exportJam(): string {
        if (this.phase !== "stopped") throw new Error("export requires a stopped session");
        const n = this.totalFrames;
        const melody = monophonize(this.events, this.clock!, n);
        const eps = this.epochs;
        const reqs = this.requestLog;
        const lines: Array<[string, string]> = [
            ["kind", "session"],
            ["format", "1"],
            ["bpm", formatFloat(this.clock!.bpm)],
            ["frames_per_beat", "4"],
            ["session_start_ms", formatFloat(this.clock!.sessionStartMs)],
            ["frames", String(n)],
            ["underruns", String(this.underruns)],
            ["melody", melody.join(" ")],
            ["chords", this.played.slice(0, n).join(" ")],
            ["warm_start_frame", String(this.warm ? this.warm.startFrame : -1)],
            ["warm_start_chords", this.warm ? this.warm.chords.join(" ") : ""],
            ["epoch_from_frame", eps.map((e) => String(e.fromFrame)).join(" ")],
            ["epoch_beats_per_measure", eps.map((e) => String(e.settings.beatsPerMeasure)).join(" ")],
            ["epoch_silence_beats", eps.map((e) => String(e.settings.silenceBeats)).join(" ")],
            ["epoch_lookahead_beats", eps.map((e) => String(e.settings.lookaheadBeats)).join(" ")],
            ["epoch_commit_beats", eps.map((e) => String(e.settings.commitBeats)).join(" ")],
            ["epoch_temperature", eps.map((e) => formatFloat(e.settings.temperature)).join(" ")],
            ["epoch_model_id", eps.map((e) => e.settings.modelId).join(" ")],
            ["epoch_metronome_on", eps.map((e) => (e.settings.metronomeOn ? "1" : "0")).join(" ")],
            ["epoch_show_incoming_chords", eps.map((e) => (e.settings.showIncomingChords ? "1" : "0")).join(" ")],
            ["epoch_seed", eps.map((e) => String(e.settings.seed)).join(" ")],
            ["req_target", reqs.map((r) => String(r.target)).join(" ")],
            ["req_commit_frames", reqs.map((r) => String(r.commitFrames)).join(" ")],
            ["req_sent_ms", reqs.map((r) => formatFloat(r.sentMs)).join(" ")],
            ["req_recv_ms", reqs.map((r) => formatFloat(r.recvMs)).join(" ")],
            ["req_gen_ms", reqs.map((r) => formatFloat(r.genMs)).join(" ")],
            ["underrun_frames", this.underrunFrames.join(" ")],
        ];
        return lines.map(([k, v]) => (v === "" ? k : `${k} ${v}`)).join("\n") + "\n";
    }

    lookaheadWindow(nowMs: number): number {
        return lookaheadFrames(this.settings) * this.clock!.frameMs;
    }
}
