// Two-oscillator synth per voice on the WebAudio clock. Instrument
// selection only changes timbre (oscillator pair + envelope); scheduling
// precision comes from passing exact `when` times, never from JS timers.
// The context is injected so tests can capture scheduled times.

export interface ScheduledParam {
    setValueAtTime(value: number, when: number): unknown;
    linearRampToValueAtTime(value: number, when: number): unknown;
    exponentialRampToValueAtTime?(value: number, when: number): unknown;
    value: number;
}

export interface OscLike {
    type: string;
    frequency: ScheduledParam;
    detune?: ScheduledParam;
    connect(node: unknown): unknown;
    start(when?: number): void;
    stop(when?: number): void;
}

export interface GainLike {
    gain: ScheduledParam;
    connect(node: unknown): unknown;
    disconnect?(): void;
}

export interface AudioContextLike {
    currentTime: number; // seconds
    destination: unknown;
    createOscillator(): OscLike;
    createGain(): GainLike;
}

export interface InstrumentSpec {
    name: string;
    waveA: string;
    waveB: string;
    detuneCents: number;
    attackS: number;
    releaseS: number;
    gain: number;
}

export const INSTRUMENTS: Record<string, InstrumentSpec> = {
    "soft-keys": { name: "soft-keys", waveA: "triangle", waveB: "sine", detuneCents: 4, attackS: 0.01, releaseS: 0.25, gain: 0.16 },
    "warm-pad": { name: "warm-pad", waveA: "sawtooth", waveB: "triangle", detuneCents: 7, attackS: 0.06, releaseS: 0.5, gain: 0.10 },
    "pluck": { name: "pluck", waveA: "square", waveB: "sine", detuneCents: 2, attackS: 0.003, releaseS: 0.12, gain: 0.12 },
};

export function midiToHz(pitch: number): number {
    return 440 * Math.pow(2, (pitch - 69) / 12);
}

interface Voice {
    oscs: OscLike[];
    gain: GainLike;
}

export class Synth {
    private ctx: AudioContextLike;
    private spec: InstrumentSpec;
    private voices = new Map<number, Voice>();

    constructor(ctx: AudioContextLike, instrument = "soft-keys") {
        this.ctx = ctx;
        this.spec = INSTRUMENTS[instrument] ?? INSTRUMENTS["soft-keys"];
    }

    setInstrument(instrument: string): void {
        this.spec = INSTRUMENTS[instrument] ?? this.spec;
    }

    noteOn(pitch: number, whenS: number): void {
        this.noteOff(pitch, whenS); // retrigger
        const gain = this.ctx.createGain();
        gain.gain.setValueAtTime(0, whenS);
        gain.gain.linearRampToValueAtTime(this.spec.gain, whenS + this.spec.attackS);
        gain.connect(this.ctx.destination);
        const oscs: OscLike[] = [];
        for (const [wave, det] of [[this.spec.waveA, 0], [this.spec.waveB, this.spec.detuneCents]] as Array<[string, number]>) {
            const osc = this.ctx.createOscillator();
            osc.type = wave;
            osc.frequency.setValueAtTime(midiToHz(pitch), whenS);
            if (osc.detune && det) osc.detune.setValueAtTime(det, whenS);
            osc.connect(gain);
            osc.start(whenS);
            oscs.push(osc);
        }
        this.voices.set(pitch, { oscs, gain });
    }

    noteOff(pitch: number, whenS: number): void {
        const voice = this.voices.get(pitch);
        if (!voice) return;
        this.voices.delete(pitch);
        const end = whenS + this.spec.releaseS;
        voice.gain.gain.setValueAtTime(voice.gain.gain.value, whenS);
        voice.gain.gain.linearRampToValueAtTime(0, end);
        for (const osc of voice.oscs) osc.stop(end);
    }

    chordOn(pitches: number[], whenS: number): void {
        for (const p of pitches) this.noteOn(p, whenS);
    }

    allOff(whenS: number): void {
        for (const pitch of [...this.voices.keys()]) this.noteOff(pitch, whenS);
    }

    tick(whenS: number, accent: boolean): void {
        const gain = this.ctx.createGain();
        gain.gain.setValueAtTime(accent ? 0.25 : 0.12, whenS);
        gain.gain.linearRampToValueAtTime(0, whenS + 0.05);
        gain.connect(this.ctx.destination);
        const osc = this.ctx.createOscillator();
        osc.type = "square";
        osc.frequency.setValueAtTime(accent ? 1760 : 1320, whenS);
        osc.connect(gain);
        osc.start(whenS);
        osc.stop(whenS + 0.06);
    }

    get activePitches(): number[] {
        return [...this.voices.keys()];
    }
}
