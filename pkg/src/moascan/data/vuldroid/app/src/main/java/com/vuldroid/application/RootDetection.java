package com.vuldroid.application;

import java.io.BufferedReader;
import java.io.InputStreamReader;

final class RootDetection {

    private RootDetection() {
    }

    static boolean isRooted(String extraPath) {
        try {
            Process p = Runtime.getRuntime().exec(new String[]{"sh", "-c", "which su " + extraPath});
            try (BufferedReader r = new BufferedReader(new InputStreamReader(p.getInputStream()))) {
                return r.readLine() != null;
            }
        } catch (Exception e) {
            return false;
        }
    }
}
