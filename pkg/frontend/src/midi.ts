// Web MIDI input. Note-on with velocity 0 is a note-off per the MIDI
// convention. Unavailable MIDI never blocks the app: the keyboard mapping
// stays active and the caller gets a human-readable warning instead.

export type NoteHandler = (pitch: number, isOn: boolean) => void;

export interface MidiPort {
    id: string;
    name: string;
}

export function parseMidiMessage(data: Uint8Array): { pitch: number; isOn: boolean } | null {
    if (data.length < 3) return null;
    const status = data[0] & 0xf0;
    const pitch = data[1];
    const velocity = data[2];
    if (status === 0x90) return { pitch, isOn: velocity > 0 };
    if (status === 0x80) return { pitch, isOn: false };
    return null;
}

export class MidiInput {
    private access: MIDIAccess | null = null;
    private handler: NoteHandler;
    private selectedId: string | null = null;
    onWarning: (message: string) => void = () => undefined;

    constructor(handler: NoteHandler) {
        this.handler = handler;
    }

    async connect(): Promise<MidiPort[]> {
        if (!("requestMIDIAccess" in navigator)) {
            this.onWarning("MIDI is not available in this browser; keyboard input stays active");
            return [];
        }
        try {
            this.access = await navigator.requestMIDIAccess();
        } catch (e) {
            this.onWarning(`MIDI access refused (${e}); keyboard input stays active`);
            return [];
        }
        const ports: MidiPort[] = [];
        this.access.inputs.forEach((input) => {
            ports.push({ id: input.id, name: input.name ?? input.id });
        });
        return ports;
    }

    select(portId: string | null): void {
        if (!this.access) return;
        this.access.inputs.forEach((input) => {
            input.onmidimessage = null;
        });
        this.selectedId = portId;
        if (portId === null) return;
        this.access.inputs.forEach((input) => {
            if (input.id !== portId) return;
            input.onmidimessage = (ev: MIDIMessageEvent) => {
                if (!ev.data) return;
                const msg = parseMidiMessage(new Uint8Array(ev.data));
                if (msg) this.handler(msg.pitch, msg.isOn);
            };
        });
    }
}
