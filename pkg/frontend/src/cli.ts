#!/usr/bin/env node
import { cliMain } from './extract';

cliMain(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
});
