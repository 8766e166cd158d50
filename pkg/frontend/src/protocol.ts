// Wire protocol documents: flat "key value" lines, fixed key order, arrays
// space-joined (a bare key is an empty array). Over WebSocket each message
// carries exactly one document, no length prefix (WS frames are already
// length-delimited). Field values are formatted the way the server emits
// them so re-encoded documents stay byte-identical.

export interface Settings {
    bpm: number;
    beatsPerMeasure: number;
    silenceBeats: number;
    lookaheadBeats: number;
    commitBeats: number;
    temperature: number;
    modelId: string;
    metronomeOn: boolean;
    showIncomingChords: boolean;
    seed: number;
}

export const DEFAULT_SETTINGS: Settings = {
    bpm: 120,
    beatsPerMeasure: 4,
    silenceBeats: 8,
    lookaheadBeats: 4,
    commitBeats: 4,
    temperature: 1,
    modelId: "markov-online",
    metronomeOn: true,
    showIncomingChords: true,
    seed: 0,
};

export interface JamRequest {
    sessionId: string;
    targetFrame: number;
    settings: Settings;
    melody: string[];
    chords: string[];
    committed: Array<[number, string]>;
}

export interface WarmStart {
    startFrame: number;
    chords: string[];
}

export interface JamResponse {
    sessionId: string;
    targetFrame: number;
    genMs: number;
    chords: string[];
    voicings: number[][];
    warmStart: WarmStart | null;
}

export interface WireError {
    kind: "error";
    code: string;
    detail: string;
}

export function isWireError(x: unknown): x is WireError {
    return typeof x === "object" && x !== null && (x as WireError).kind === "error";
}

export function silenceFrames(s: Settings): number {
    return 4 * s.silenceBeats;
}
export function lookaheadFrames(s: Settings): number {
    return 4 * s.lookaheadBeats;
}
export function commitFrames(s: Settings): number {
    return 4 * s.commitBeats;
}

// Matches python's repr() for the float values that appear in documents.
export function formatFloat(x: number): string {
    return Number.isInteger(x) ? `${x}.0` : String(x);
}

const QUALITIES = ["maj", "min", "dim", "aug", "maj7", "min7", "dom7"] as const;
const TEMPLATES: Record<string, number[]> = {
    maj: [0, 4, 7], min: [0, 3, 7], dim: [0, 3, 6], aug: [0, 4, 8],
    maj7: [0, 4, 7, 11], min7: [0, 3, 7, 10], dom7: [0, 4, 7, 10],
};

export function isChordSymbol(token: string): boolean {
    const m = /^(\d{1,2}):([a-z0-9]+)$/.exec(token);
    if (!m) return false;
    const root = Number(m[1]);
    return root >= 0 && root <= 11 && (QUALITIES as readonly string[]).includes(m[2]);
}

export function voiceChord(token: string): number[] {
    // Root in the octave below middle C, chord tones stacked above; mirrors
    // the server's voicing so the display agrees with the audio.
    const m = /^(\d{1,2}):([a-z0-9]+)$/.exec(token);
    if (!m || !isChordSymbol(token)) throw new Error(`not a chord symbol: ${token}`);
    const base = 48 + Number(m[1]);
    return TEMPLATES[m[2]].map((iv) => base + iv);
}

export function chordLabel(token: string): string {
    const names = ["C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"];
    const m = /^(\d{1,2}):([a-z0-9]+)$/.exec(token);
    if (!m) return token === "NC" ? "" : token;
    const suffix: Record<string, string> = {
        maj: "", min: "m", dim: "°", aug: "+", maj7: "maj7", min7: "m7", dom7: "7",
    };
    return names[Number(m[1])] + suffix[m[2]];
}

function joinTokens(tokens: string[]): string {
    return tokens.join(" ");
}

export function encodeRequest(req: JamRequest): string {
    const s = req.settings;
    const lines: Array<[string, string]> = [
        ["kind", "request"],
        ["session_id", req.sessionId],
        ["target_frame", String(req.targetFrame)],
        ["bpm", formatFloat(s.bpm)],
        ["beats_per_measure", String(s.beatsPerMeasure)],
        ["silence_beats", String(s.silenceBeats)],
        ["lookahead_beats", String(s.lookaheadBeats)],
        ["commit_beats", String(s.commitBeats)],
        ["temperature", formatFloat(s.temperature)],
        ["model_id", s.modelId],
        ["metronome_on", s.metronomeOn ? "1" : "0"],
        ["show_incoming_chords", s.showIncomingChords ? "1" : "0"],
        ["seed", String(s.seed)],
        ["melody", joinTokens(req.melody)],
        ["chords", joinTokens(req.chords)],
        ["committed_frames", joinTokens(req.committed.map(([f]) => String(f)))],
        ["committed_chords", joinTokens(req.committed.map(([, c]) => c))],
    ];
    return lines.map(([k, v]) => (v === "" ? k : `${k} ${v}`)).join("\n") + "\n";
}

export function parseLines(text: string): Map<string, string> {
    const doc = new Map<string, string>();
    for (const line of text.split("\n")) {
        if (!line.trim()) continue;
        const sp = line.indexOf(" ");
        const key = sp < 0 ? line : line.slice(0, sp);
        const value = sp < 0 ? "" : line.slice(sp + 1);
        if (doc.has(key)) throw new Error(`duplicate key ${key}`);
        doc.set(key, value);
    }
    return doc;
}

function splitTokens(value: string | undefined): string[] {
    if (!value) return [];
    return value.split(/\s+/).filter((t) => t.length > 0);
}

function parseVoicing(entry: string): number[] {
    return entry === "-" ? [] : entry.split("+").map(Number);
}

export function decodeResponse(text: string): JamResponse | WireError {
    let doc: Map<string, string>;
    try {
        doc = parseLines(text);
    } catch (e) {
        return { kind: "error", code: "MALFORMED", detail: String(e) };
    }
    if (doc.get("kind") === "error") {
        return {
            kind: "error",
            code: doc.get("code") ?? "MALFORMED",
            detail: doc.get("detail") ?? "",
        };
    }
    if (doc.get("kind") !== "response") {
        return { kind: "error", code: "MALFORMED", detail: `unexpected kind ${doc.get("kind")}` };
    }
    for (const key of ["session_id", "target_frame", "gen_ms", "chords", "voicings"]) {
        if (!doc.has(key)) {
            return { kind: "error", code: "MALFORMED", detail: `missing key ${key}` };
        }
    }
    let warm: WarmStart | null = null;
    if (doc.has("warm_start_frame")) {
        warm = {
            startFrame: Number(doc.get("warm_start_frame")),
            chords: splitTokens(doc.get("warm_start_chords")),
        };
    }
    return {
        sessionId: doc.get("session_id")!,
        targetFrame: Number(doc.get("target_frame")),
        genMs: Number(doc.get("gen_ms")),
        chords: splitTokens(doc.get("chords")),
        voicings: splitTokens(doc.get("voicings")).map(parseVoicing),
        warmStart: warm,
    };
}
